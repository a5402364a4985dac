use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::oracles::RewardKind;
use crate::Scalar;

/// One update. Reward maps are keyed by reward letter (`F`, `R`, `A`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub l_base: f64,
    /// Mean raw reward over the batch's scored samples.
    pub reward: BTreeMap<String, f64>,
    /// Mean `R_k - alpha_k`.
    pub advantage: BTreeMap<String, f64>,
    /// Samples whose reward could not be computed.
    pub failed: BTreeMap<String, usize>,
    pub joint_loss: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub clipped_norm: f64,
    pub learning_rate: f64,
}

impl StepRecord {
    pub(crate) fn new(step: usize, epoch: usize, l_base: f64, joint_loss: f64) -> Self {
        StepRecord {
            step,
            epoch,
            l_base,
            reward: BTreeMap::new(),
            advantage: BTreeMap::new(),
            failed: BTreeMap::new(),
            joint_loss,
            grad_norm: 0.0,
            clipped_norm: 0.0,
            learning_rate: 0.0,
        }
    }

    pub(crate) fn add_reward(&mut self, k: RewardKind, values: &[f64], baseline: f64, failed: usize) {
        let key = k.letter().to_string();
        if !values.is_empty() {
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            self.reward.insert(key.clone(), mean);
            self.advantage.insert(key.clone(), mean - baseline);
        }
        self.failed.insert(key, failed);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub step: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
    pub dev_rewards: BTreeMap<String, f64>,
    pub dev_objective: f64,
    pub learning_rate: f64,
    pub improved: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept; 0 means the starting parameters.
    pub best_epoch: usize,
    pub initial_dev: Option<f64>,
    pub best_dev: Option<f64>,
    /// Failed reward computations per reward letter.
    pub failures: BTreeMap<String, usize>,
}

/// Streams `train_log.jsonl` (one record per line, tagged by `kind`) and
/// writes checkpoints into the output directory, when one is set.
pub struct LogWriter {
    dir: Option<PathBuf>,
    out: Option<BufWriter<File>>,
}

#[derive(Serialize)]
struct Tagged<'a, T> {
    kind: &'a str,
    #[serde(flatten)]
    record: &'a T,
}

impl LogWriter {
    pub fn new(dir: Option<&Path>) -> Result<Self> {
        let out = match dir {
            Some(d) => {
                fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
                let path = d.join("train_log.jsonl");
                Some(BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?))
            }
            None => None,
        };
        Ok(LogWriter {
            dir: dir.map(Path::to_path_buf),
            out,
        })
    }

    fn write<T: Serialize>(&mut self, kind: &str, record: &T) -> Result<()> {
        if let (Some(out), Some(dir)) = (self.out.as_mut(), self.dir.as_ref()) {
            let line = serde_json::to_string(&Tagged { kind, record })?;
            let path = dir.join("train_log.jsonl");
            writeln!(out, "{line}")
                .and_then(|_| out.flush())
                .map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn step(&mut self, r: &StepRecord) -> Result<()> {
        self.write("step", r)
    }

    pub fn epoch(&mut self, r: &EpochRecord) -> Result<()> {
        self.write("epoch", r)
    }

    pub fn save_checkpoint<F: Scalar>(&self, name: &str, gen: &Generator<F>) -> Result<Option<PathBuf>> {
        match &self.dir {
            Some(d) => {
                let path = d.join(name);
                gen.save(&path)?;
                Ok(Some(path))
            }
            None => Ok(None),
        }
    }
}
