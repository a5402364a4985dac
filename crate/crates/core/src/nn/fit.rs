use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::params::{Gradients, ParamStore};
use crate::error::{Error, Result};
use crate::Scalar;

/// Mean loss and mean gradient over `items`. Per-item work runs in
/// parallel; the reduction is sequential, so results do not depend on the
/// thread count.
pub fn mean_gradients<F, T, L>(store: &ParamStore<F>, items: &[T], loss: L) -> (F, Gradients<F>)
where
    F: Scalar,
    T: Sync,
    L: Fn(&ParamStore<F>, &T) -> (F, Gradients<F>) + Sync,
{
    let parts: Vec<(F, Gradients<F>)> = items.par_iter().map(|it| loss(store, it)).collect();
    let mut total = store.zero_grads();
    let mut sum = F::zero();
    for (l, g) in &parts {
        sum += *l;
        total.add_scaled(g, F::one());
    }
    let n = F::from_usize(items.len().max(1)).unwrap();
    total.scale(F::one() / n);
    (sum / n, total)
}

/// Minibatch schedule for the supervised oracle models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            epochs: 10,
            batch_size: 32,
            learning_rate: 1e-2,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || !(self.learning_rate > 0.0) || !(self.clip_norm > 0.0) {
            return Err(Error::Config(
                "batch_size, learning_rate and clip_norm must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Shuffled minibatch Adam with global-norm clipping. Returns the mean
/// training loss of every epoch.
pub fn fit<F, T, L>(store: &mut ParamStore<F>, items: &[T], opts: &FitOptions, loss: L) -> Result<Vec<F>>
where
    F: Scalar,
    T: Sync,
    L: Fn(&ParamStore<F>, &T) -> (F, Gradients<F>) + Sync,
{
    opts.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut adam = Adam::new(store);
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut history = Vec::with_capacity(opts.epochs);
    let mut step = 0;
    for _ in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = F::zero();
        for chunk in order.chunks(opts.batch_size) {
            let batch: Vec<&T> = chunk.iter().map(|&i| &items[i]).collect();
            let (l, mut g) = mean_gradients(store, &batch, |s, it| loss(s, it));
            step += 1;
            if !l.is_finite() || !g.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step,
                    detail: format!("batch loss {l}"),
                });
            }
            g.clip_global_norm(F::of(opts.clip_norm));
            adam.step(store, &g, F::of(opts.learning_rate));
            epoch_loss += l * F::from_usize(chunk.len()).unwrap();
        }
        history.push(epoch_loss / F::from_usize(items.len().max(1)).unwrap());
    }
    Ok(history)
}
