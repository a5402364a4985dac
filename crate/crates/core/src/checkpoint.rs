//! Versioned checkpoint container shared by the generator and the oracles.

use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{read_text, write_text, Vocabulary};
use crate::error::{Error, Result};
use crate::nn::{ParamRecord, ParamStore};
use crate::Scalar;

pub const FORMAT: &str = "qgrl-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// `generator`, `language-model`, `relevance-discriminator` or `span-qa`.
    pub kind: String,
    pub scalar: String,
    pub config: serde_json::Value,
    pub vocab_hash: String,
    pub vocab: Vocabulary,
    #[serde(default)]
    pub metrics: serde_json::Value,
    pub params: Vec<ParamRecord>,
}

impl Checkpoint {
    pub fn new<F: Scalar, C: Serialize>(
        kind: &str,
        config: &C,
        vocab: &Vocabulary,
        params: &ParamStore<F>,
    ) -> Self {
        Checkpoint {
            format: FORMAT.into(),
            version: VERSION,
            kind: kind.into(),
            scalar: F::NAME.into(),
            config: serde_json::to_value(config).expect("config serializes"),
            vocab_hash: vocab.hash(),
            vocab: vocab.clone(),
            metrics: serde_json::Value::Null,
            params: params.to_records(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string(self)?;
        write_text(path.as_ref(), &text)
    }

    /// Loads and checks format, version, kind and the stored vocabulary
    /// hash; when `expected_vocab` is given its hash must match too.
    pub fn load(
        path: impl AsRef<Path>,
        kind: &str,
        expected_vocab: Option<&Vocabulary>,
    ) -> Result<Self> {
        let path = path.as_ref();
        let fail = |message: String| Error::Checkpoint {
            path: path.to_path_buf(),
            message,
        };
        let ckpt: Checkpoint =
            serde_json::from_str(&read_text(path)?).map_err(|e| fail(e.to_string()))?;
        if ckpt.format != FORMAT {
            return Err(fail(format!("unknown format `{}`", ckpt.format)));
        }
        if ckpt.version != VERSION {
            return Err(fail(format!("unsupported version {}", ckpt.version)));
        }
        if ckpt.kind != kind {
            return Err(fail(format!("expected a {kind} checkpoint, found {}", ckpt.kind)));
        }
        if ckpt.vocab.hash() != ckpt.vocab_hash {
            return Err(fail("stored vocabulary does not match its hash".into()));
        }
        if let Some(v) = expected_vocab {
            if v.hash() != ckpt.vocab_hash {
                return Err(fail(format!(
                    "vocabulary hash mismatch: checkpoint {} vs current {}",
                    ckpt.vocab_hash,
                    v.hash()
                )));
            }
        }
        Ok(ckpt)
    }

    pub fn config<C: DeserializeOwned>(&self) -> Result<C> {
        Ok(serde_json::from_value(self.config.clone())?)
    }

    pub fn restore<F: Scalar>(&self, params: &mut ParamStore<F>) -> Result<()> {
        params.load_records(&self.params).map_err(|m| Error::Checkpoint {
            path: Default::default(),
            message: m,
        })
    }
}

/// Hex SHA-256 over parameter names, shapes and values.
pub fn fingerprint<F: Scalar>(params: &ParamStore<F>) -> String {
    let mut h = Sha256::new();
    for p in params.iter() {
        h.update(p.name.as_bytes());
        h.update((p.rows as u64).to_le_bytes());
        h.update((p.cols as u64).to_le_bytes());
        for x in &p.data {
            h.update(x.f64().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}
