//! Small reverse-mode autodiff toolkit: parameters, a recording graph,
//! recurrent and linear layers, and the Adam optimizer.

mod adam;
mod fit;
mod gradcheck;
mod graph;
mod layers;
mod params;

pub use adam::Adam;
pub use fit::{fit, mean_gradients, FitOptions};
pub use gradcheck::{check_gradients, GradCheck};
pub use graph::{softmax, Graph, NodeId};
pub use layers::{Gru, Linear};
pub use params::{Gradients, Param, ParamId, ParamRecord, ParamStore};
