//! Maximum-likelihood pretraining and reward fine-tuning of the generator.
//!
//! Both stages share one loop. Each batch computes the teacher-forced base
//! loss on the gold questions; when rewards are enabled it also samples
//! questions, scores them with the oracles and adds, for every enabled
//! reward `k`, the term
//!
//! `gamma_k * L_k`, with `L_k = -(R_k - alpha_k) * (1/T) sum_t log P(y_t)`
//!
//! where `alpha_k` is a constant baseline. With no rewards enabled nothing
//! is sampled and the loop is plain pretraining.

mod config;
mod log;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::Example;
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::nn::{Adam, Gradients, Graph, NodeId, ParamStore};
use crate::oracles::{Oracles, RewardKind, RewardSet, RewardValues};
use crate::Scalar;

pub use config::{BaselineConfig, LossWeights, TrainConfig};
pub use log::{EpochRecord, LogWriter, StepRecord, TrainReport};

/// `-(reward - baseline) * mean(log_probs)`.
pub fn rl_loss<F: Scalar>(log_probs: &[F], reward: F, baseline: F) -> F {
    let mean = log_probs.iter().copied().sum::<F>() / F::from_usize(log_probs.len().max(1)).unwrap();
    -(reward - baseline) * mean
}

/// `L_base + gamma_flu L_flu + gamma_rel L_rel + gamma_ans L_ans`; absent
/// terms contribute nothing.
pub fn joint_loss<F: Scalar>(l_base: F, rl: [Option<F>; 3], w: &LossWeights) -> F {
    let mut total = l_base;
    for k in RewardKind::ALL {
        if let Some(l) = rl[k.index()] {
            total += F::of(w.get(k)) * l;
        }
    }
    total
}

/// A sampled question with its reward values, fixed for one update.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSample<F> {
    pub ids: Vec<usize>,
    pub rewards: RewardValues<F>,
}

/// Per-example outcome of one update.
#[derive(Debug, Clone)]
pub struct ExampleLoss<F> {
    pub joint: F,
    pub l_base: F,
    pub grads: Gradients<F>,
}

/// Joint loss of one example and its gradient with respect to `params`,
/// for samples and rewards held fixed. Each sample's reward terms are
/// averaged over the samples.
pub fn example_loss<F: Scalar>(
    gen: &Generator<F>,
    params: &ParamStore<F>,
    example: &Example,
    samples: &[ScoredSample<F>],
    baselines: &BaselineConfig,
    weights: &LossWeights,
) -> ExampleLoss<F> {
    let mut g = Graph::new(params);
    let enc = gen.encode_on(&mut g, &example.document);
    let base = gen.mle_loss_on(&mut g, &enc, &example.question, weights.coverage);
    let root = rl_terms_on(gen, &mut g, &enc, base, samples, baselines, weights);
    let mut grads = params.zero_grads();
    g.backward(root, F::one(), &mut grads);
    ExampleLoss {
        joint: g.scalar(root),
        l_base: g.scalar(base),
        grads,
    }
}

fn rl_terms_on<F: Scalar>(
    gen: &Generator<F>,
    g: &mut Graph<'_, F>,
    enc: &crate::generator::EncNodes,
    base: NodeId,
    samples: &[ScoredSample<F>],
    baselines: &BaselineConfig,
    weights: &LossWeights,
) -> NodeId {
    let mut root = base;
    let per_sample = F::one() / F::from_usize(samples.len().max(1)).unwrap();
    for s in samples {
        let mut coef = F::zero();
        let mut any = false;
        for k in RewardKind::ALL {
            if let Some(r) = s.rewards.get(k) {
                coef += F::of(weights.get(k)) * (r - F::of(baselines.get(k)));
                any = true;
            }
        }
        if !any || s.ids.is_empty() {
            continue;
        }
        let pass = gen.force_on(g, enc, &s.ids, false);
        let lps = g.concat(&pass.log_probs);
        let total = g.sum(lps);
        let t = F::from_usize(s.ids.len()).unwrap();
        let term = g.scale(total, -coef * per_sample / t);
        root = g.add(root, term);
    }
    root
}

fn mix_seed(seed: u64, step: usize, slot: usize) -> u64 {
    let mut z = seed
        ^ (step as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (slot as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct ExampleOutcome<F> {
    loss: ExampleLoss<F>,
    rewards: Vec<RewardValues<F>>,
    failures: Vec<RewardKind>,
}

/// Where training writes its log and checkpoints.
#[derive(Debug, Clone, Default)]
pub struct TrainOutputs {
    pub dir: Option<PathBuf>,
}

impl TrainOutputs {
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        TrainOutputs {
            dir: Some(dir.as_ref().to_path_buf()),
        }
    }
}

/// Dev-set summary used for model selection.
#[derive(Debug, Clone, PartialEq)]
pub struct DevScore {
    pub l_base: f64,
    pub rewards: BTreeMap<String, f64>,
    /// `l_base - sum_k gamma_k (mean R_k - alpha_k)` over enabled rewards,
    /// with rewards of greedy decodes. Lower is better.
    pub objective: f64,
}

pub struct Trainer<'o, F> {
    pub config: TrainConfig,
    pub baselines: BaselineConfig,
    pub weights: LossWeights,
    pub oracles: Oracles<'o, F>,
    pub outputs: TrainOutputs,
}

impl<'o, F: Scalar> Trainer<'o, F> {
    /// A trainer with every reward disabled.
    pub fn pretraining(config: TrainConfig, weights: LossWeights) -> Self {
        Trainer {
            config: TrainConfig {
                rewards: RewardSet::NONE,
                ..config
            },
            baselines: BaselineConfig::default(),
            weights,
            oracles: Oracles::none(),
            outputs: TrainOutputs::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.weights.validate()?;
        self.baselines.validate()?;
        self.oracles.config.validate()?;
        for k in self.config.rewards.iter() {
            if !self.oracles.available().contains(k) {
                return Err(Error::Config(format!("reward {k} enabled but its oracle is not loaded")));
            }
        }
        Ok(())
    }

    fn process_example(
        &self,
        gen: &Generator<F>,
        ex: &Example,
        step: usize,
        slot: usize,
    ) -> ExampleOutcome<F> {
        let cfg = &self.config;
        let mut g = Graph::new(gen.params());
        let enc = gen.encode_on(&mut g, &ex.document);
        let base = gen.mle_loss_on(&mut g, &enc, &ex.question, self.weights.coverage);
        let mut scored = Vec::new();
        let mut rewards = Vec::new();
        let mut failures = Vec::new();
        if !cfg.rewards.is_empty() {
            let values = gen.snapshot(&g, &enc);
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, step, slot));
            for _ in 0..cfg.samples_per_example {
                let s = gen.sample_encoded(&values, cfg.max_sample_len, &mut rng);
                let (r, failed) = self.oracles.rewards(cfg.rewards, &ex.document, s.question());
                failures.extend(failed.into_iter().map(|f| f.0));
                rewards.push(r);
                scored.push(ScoredSample { ids: s.ids, rewards: r });
            }
        }
        let root = rl_terms_on(gen, &mut g, &enc, base, &scored, &self.baselines, &self.weights);
        let mut grads = gen.params().zero_grads();
        g.backward(root, F::one(), &mut grads);
        ExampleOutcome {
            loss: ExampleLoss {
                joint: g.scalar(root),
                l_base: g.scalar(base),
                grads,
            },
            rewards,
            failures,
        }
    }

    /// Mean base loss over `dev` and, with rewards enabled, mean rewards of
    /// greedy decodes on the first `dev_reward_limit` examples.
    pub fn evaluate_dev(&self, gen: &Generator<F>, dev: &[Example]) -> DevScore {
        let l_base: f64 = dev
            .par_iter()
            .map(|ex| {
                let mut g = Graph::new(gen.params());
                let enc = gen.encode_on(&mut g, &ex.document);
                let l = gen.mle_loss_on(&mut g, &enc, &ex.question, self.weights.coverage);
                g.scalar(l).f64()
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum::<f64>()
            / dev.len().max(1) as f64;
        let mut rewards = BTreeMap::new();
        let mut objective = l_base;
        if !self.config.rewards.is_empty() {
            let limit = match self.config.dev_reward_limit {
                0 => dev.len(),
                n => n.min(dev.len()),
            };
            let scored: Vec<RewardValues<F>> = dev[..limit]
                .par_iter()
                .map(|ex| {
                    let q = gen.greedy(&ex.document, self.config.max_sample_len);
                    self.oracles.rewards(self.config.rewards, &ex.document, &q).0
                })
                .collect();
            for k in self.config.rewards.iter() {
                let vals: Vec<f64> = scored.iter().filter_map(|r| r.get(k)).map(|v| v.f64()).collect();
                if vals.is_empty() {
                    continue;
                }
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                rewards.insert(k.letter().to_string(), mean);
                objective -= self.weights.get(k) * (mean - self.baselines.get(k));
            }
        }
        DevScore {
            l_base,
            rewards,
            objective,
        }
    }

    /// Trains `gen` in place and leaves it at the best dev epoch.
    pub fn train(&self, gen: &mut Generator<F>, train: &[Example], dev: &[Example]) -> Result<TrainReport> {
        self.validate()?;
        if train.is_empty() {
            return Err(Error::invalid("training corpus is empty"));
        }
        let cfg = &self.config;
        gen.set_coverage_weight(self.weights.coverage);
        let mut log = LogWriter::new(self.outputs.dir.as_deref())?;
        let mut report = TrainReport::default();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut adam = Adam::new(gen.params());
        let mut lr = cfg.learning_rate;
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut step = 0usize;

        let initial = self.evaluate_dev(gen, dev);
        let mut best = (initial.objective, gen.params().clone(), 0usize);
        report.initial_dev = Some(initial.objective);
        let mut bad_epochs = 0;

        'epochs: for epoch in 1..=cfg.max_epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            let mut seen = 0usize;
            for chunk in order.chunks(cfg.batch_size) {
                if cfg.max_steps > 0 && step >= cfg.max_steps {
                    break;
                }
                step += 1;
                let outcomes: Vec<ExampleOutcome<F>> = chunk
                    .par_iter()
                    .enumerate()
                    .map(|(slot, &i)| self.process_example(gen, &train[i], step, slot))
                    .collect();
                let n = F::from_usize(chunk.len()).unwrap();
                let mut grads = gen.params().zero_grads();
                let (mut joint, mut l_base) = (F::zero(), F::zero());
                for o in &outcomes {
                    grads.add_scaled(&o.loss.grads, F::one() / n);
                    joint += o.loss.joint / n;
                    l_base += o.loss.l_base / n;
                }
                let mut record = StepRecord::new(step, epoch, l_base.f64(), joint.f64());
                for k in cfg.rewards.iter() {
                    let vals: Vec<f64> = outcomes
                        .iter()
                        .flat_map(|o| o.rewards.iter().filter_map(|r| r.get(k)))
                        .map(|v| v.f64())
                        .collect();
                    let fails = outcomes
                        .iter()
                        .map(|o| o.failures.iter().filter(|&&f| f == k).count())
                        .sum::<usize>();
                    record.add_reward(k, &vals, self.baselines.get(k), fails);
                    *report.failures.entry(k.letter().to_string()).or_default() += fails;
                }
                if !joint.is_finite() || !grads.is_finite() {
                    let path = log.save_checkpoint("last_good.json", gen)?;
                    return Err(Error::NonFiniteLoss {
                        step,
                        detail: format!(
                            "joint loss {joint}, l_base {l_base}; parameters left at the last good step{}",
                            path.map(|p| format!(", saved to {}", p.display())).unwrap_or_default()
                        ),
                    });
                }
                record.grad_norm = grads.clip_global_norm(F::of(cfg.clip_norm)).f64();
                record.clipped_norm = grads.global_norm().f64();
                record.learning_rate = lr;
                adam.step(gen.params_mut(), &grads, F::of(lr));
                epoch_loss += l_base.f64() * chunk.len() as f64;
                seen += chunk.len();
                log.step(&record)?;
                if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 {
                    log.save_checkpoint(&format!("step-{step}.json"), gen)?;
                }
                report.steps.push(record);
            }
            if seen == 0 {
                break;
            }
            let dev_score = self.evaluate_dev(gen, dev);
            let improved = dev_score.objective < best.0;
            let record = EpochRecord {
                epoch,
                step,
                train_loss: epoch_loss / seen as f64,
                dev_loss: dev_score.l_base,
                dev_rewards: dev_score.rewards.clone(),
                dev_objective: dev_score.objective,
                learning_rate: lr,
                improved,
            };
            log.epoch(&record)?;
            report.epochs.push(record);
            if improved {
                best = (dev_score.objective, gen.params().clone(), epoch);
                bad_epochs = 0;
                log.save_checkpoint("best.json", gen)?;
            } else {
                bad_epochs += 1;
                lr *= cfg.lr_decay;
                if bad_epochs >= cfg.patience {
                    break 'epochs;
                }
            }
            if cfg.max_steps > 0 && step >= cfg.max_steps {
                break;
            }
        }
        gen.set_params(best.1);
        report.best_epoch = best.2;
        report.best_dev = Some(best.0);
        Ok(report)
    }
}

/// Maximum-likelihood pretraining.
pub fn pretrain<F: Scalar>(
    gen: &mut Generator<F>,
    train: &[Example],
    dev: &[Example],
    config: &TrainConfig,
    weights: &LossWeights,
    outputs: TrainOutputs,
) -> Result<TrainReport> {
    let mut t = Trainer::pretraining(config.clone(), *weights);
    t.outputs = outputs;
    t.train(gen, train, dev)
}

/// Reward fine-tuning with the rewards enabled in `config.rewards`.
pub fn finetune<F: Scalar>(
    gen: &mut Generator<F>,
    train: &[Example],
    dev: &[Example],
    oracles: Oracles<'_, F>,
    baselines: &BaselineConfig,
    weights: &LossWeights,
    config: &TrainConfig,
    outputs: TrainOutputs,
) -> Result<TrainReport> {
    Trainer {
        config: config.clone(),
        baselines: *baselines,
        weights: *weights,
        oracles,
        outputs,
    }
    .train(gen, train, dev)
}
