//! Layered run configuration: built-in defaults, then a TOML file, then
//! command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use qgrl_core::generator::GeneratorConfig;
use qgrl_core::oracles::{DiscriminatorConfig, LmConfig, QaConfig, RewardConfig, RewardSet};
use qgrl_core::synthetic::SyntheticConfig;
use qgrl_core::trainer::{BaselineConfig, LossWeights, TrainConfig};

/// Data files, relative to `data_dir`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub train: PathBuf,
    pub dev: PathBuf,
    pub test: PathBuf,
    pub rated: PathBuf,
    pub ratings: PathBuf,
    pub entropy: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            train: "train.jsonl".into(),
            dev: "dev.jsonl".into(),
            test: "test.jsonl".into(),
            rated: "rated.jsonl".into(),
            ratings: "ratings.csv".into(),
            entropy: "entropy.json".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateConfig {
    pub resamples: usize,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig { resamples: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Reward combinations fine-tuned by `pipeline`, in report order.
    pub finetune_sets: Vec<RewardSet>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let sets = ["F", "R", "A", "F,R", "R,A", "F,A", "F,R,A"];
        PipelineConfig { finetune_sets: sets.iter().map(|s| s.parse().expect("valid reward set")).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seed for generator initialisation, negative sampling and bootstrap.
    pub seed: u64,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub paths: Paths,
    pub generator: GeneratorConfig,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub reward: RewardConfig,
    pub baselines: BaselineConfig,
    pub weights: LossWeights,
    pub lm: LmConfig,
    pub discriminator: DiscriminatorConfig,
    pub qa: QaConfig,
    pub evaluate: EvaluateConfig,
    pub pipeline: PipelineConfig,
    pub synthetic: SyntheticConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            data_dir: "data/synthetic".into(),
            out_dir: "runs".into(),
            paths: Paths::default(),
            generator: GeneratorConfig::default(),
            pretrain: TrainConfig::default(),
            finetune: TrainConfig { rewards: RewardSet::ALL, ..TrainConfig::default() },
            reward: RewardConfig::default(),
            baselines: BaselineConfig::default(),
            weights: LossWeights::default(),
            lm: LmConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            qa: QaConfig::default(),
            evaluate: EvaluateConfig::default(),
            pipeline: PipelineConfig::default(),
            synthetic: SyntheticConfig::default(),
        }
    }
}

/// Values given as dedicated flags.
#[derive(Debug, Clone, Default)]
pub struct Flags {
    pub seed: Option<u64>,
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub rewards: Option<RewardSet>,
    pub beam: Option<usize>,
}

impl RunConfig {
    pub fn data(&self, file: &Path) -> PathBuf {
        self.data_dir.join(file)
    }

    /// Sets every seed field.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.pretrain.seed = seed;
        self.finetune.seed = seed;
        self.lm.train.seed = seed;
        self.discriminator.train.seed = seed;
        self.qa.train.seed = seed;
        self.synthetic.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.pretrain.validate()?;
        self.finetune.validate()?;
        self.reward.validate()?;
        self.baselines.validate()?;
        self.weights.validate()?;
        self.lm.train.validate()?;
        self.discriminator.train.validate()?;
        self.discriminator.focal.validate()?;
        self.qa.train.validate()?;
        self.synthetic.validate()?;
        if self.evaluate.resamples < 1000 {
            bail!("evaluate.resamples must be at least 1000");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes to TOML")
    }

    /// Defaults, then `file`, then `overrides` (`section.key`, raw value),
    /// then `flags`.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)], flags: &Flags) -> Result<RunConfig> {
        let mut value = toml::Value::try_from(RunConfig::default()).context("serializing defaults")?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            let table: toml::Table =
                toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
            merge(&mut value, toml::Value::Table(table));
        }
        for (key, raw) in overrides {
            set_path(&mut value, key, parse_scalar(raw))?;
        }
        let mut cfg: RunConfig = value.try_into().map_err(|e: toml::de::Error| {
            anyhow::anyhow!("invalid configuration: {}", e.message().trim())
        })?;
        if let Some(s) = flags.seed {
            cfg.set_seed(s);
        }
        if let Some(d) = &flags.data_dir {
            cfg.data_dir = d.clone();
        }
        if let Some(d) = &flags.out_dir {
            cfg.out_dir = d.clone();
        }
        if let Some(r) = flags.rewards {
            cfg.finetune.rewards = r;
        }
        if let Some(b) = flags.beam {
            cfg.generator.beam_size = b;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// A TOML literal when the text parses as one, otherwise a string.
fn parse_scalar(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(value: &mut toml::Value, key: &str, v: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("malformed override key `{key}`");
    }
    let mut cur = value;
    for p in &parts[..parts.len() - 1] {
        let table = cur.as_table_mut().with_context(|| format!("override `{key}`: `{p}` is not a section"))?;
        cur = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    let table = cur
        .as_table_mut()
        .with_context(|| format!("override `{key}` does not name a section key"))?;
    let last = parts[parts.len() - 1].to_string();
    if !table.contains_key(&last) {
        bail!("unknown configuration key `{key}`");
    }
    table.insert(last, v);
    Ok(())
}

/// Splits `--section.key value` and `--section.key=value` overrides out of
/// `args`; any flag whose name contains a dot is an override.
pub fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>)> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let name = a.strip_prefix("--").filter(|n| n.split('=').next().is_some_and(|k| k.contains('.')));
        match name {
            Some(n) => match n.split_once('=') {
                Some((k, v)) => overrides.push((k.to_string(), v.to_string())),
                None => {
                    let v = it.next().with_context(|| format!("override --{n} needs a value"))?;
                    overrides.push((n.to_string(), v));
                }
            },
            None => rest.push(a),
        }
    }
    Ok((rest, overrides))
}
