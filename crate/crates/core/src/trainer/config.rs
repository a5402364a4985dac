use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracles::{RewardKind, RewardSet};

/// Constant reward baselines `alpha_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub fluency: f64,
    pub relevance: f64,
    pub answerability: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            fluency: -10.0,
            relevance: std::f64::consts::LN_2,
            answerability: std::f64::consts::LN_2,
        }
    }
}

impl BaselineConfig {
    pub fn get(&self, k: RewardKind) -> f64 {
        match k {
            RewardKind::Fluency => self.fluency,
            RewardKind::Relevance => self.relevance,
            RewardKind::Answerability => self.answerability,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.fluency, self.relevance, self.answerability].iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config("baselines must be finite".into()))
        }
    }
}

/// Loss weights: coverage inside the base loss, then one per reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub coverage: f64,
    pub fluency: f64,
    pub relevance: f64,
    pub answerability: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            coverage: 0.25,
            fluency: 0.2,
            relevance: 1.0,
            answerability: 1.0,
        }
    }
}

impl LossWeights {
    pub const ZERO: LossWeights = LossWeights {
        coverage: 0.0,
        fluency: 0.0,
        relevance: 0.0,
        answerability: 0.0,
    };

    pub fn get(&self, k: RewardKind) -> f64 {
        match k {
            RewardKind::Fluency => self.fluency,
            RewardKind::Relevance => self.relevance,
            RewardKind::Answerability => self.answerability,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.coverage, self.fluency, self.relevance, self.answerability];
        if all.iter().all(|w| w.is_finite() && *w >= 0.0) {
            Ok(())
        } else {
            Err(Error::Config("loss weights must be finite and >= 0".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub max_epochs: usize,
    /// Epochs without dev improvement before stopping.
    pub patience: usize,
    /// Learning-rate factor applied after an epoch without dev improvement.
    pub lr_decay: f64,
    pub seed: u64,
    pub rewards: RewardSet,
    pub samples_per_example: usize,
    pub max_sample_len: usize,
    /// Dev examples decoded for reward-based selection; 0 means all.
    pub dev_reward_limit: usize,
    /// Save a checkpoint every this many steps; 0 disables.
    pub checkpoint_every: usize,
    /// Stop after this many updates; 0 means no limit.
    pub max_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            learning_rate: 1e-3,
            clip_norm: 5.0,
            max_epochs: 20,
            patience: 3,
            lr_decay: 0.5,
            seed: 0,
            rewards: RewardSet::NONE,
            samples_per_example: 1,
            max_sample_len: 32,
            dev_reward_limit: 200,
            checkpoint_every: 0,
            max_steps: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.clip_norm > 0.0) {
            return Err(Error::Config("learning_rate and clip_norm must be > 0".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config("lr_decay must lie in (0, 1]".into()));
        }
        if self.samples_per_example == 0 || self.max_sample_len == 0 || self.patience == 0 {
            return Err(Error::Config(
                "samples_per_example, max_sample_len and patience must be >= 1".into(),
            ));
        }
        Ok(())
    }
}
