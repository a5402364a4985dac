//! Question generation fine-tuned with fluency, relevance and answerability
//! rewards.
//!
//! The crate is generic over the floating point type ([`Scalar`]); the
//! aliases below fix it to `f64` or `f32`.

pub mod analysis;
pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod generator;
pub mod metrics;
pub mod scalar;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub mod nn;
pub mod oracles;

pub type Generator64 = generator::Generator<f64>;
pub type Generator32 = generator::Generator<f32>;
