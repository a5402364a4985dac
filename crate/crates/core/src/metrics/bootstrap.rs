use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_aligned, sum_stats, Metric};
use crate::error::{Error, Result};

/// Paired bootstrap over per-example additive statistics.
///
/// Returns the fraction of resamples whose difference `score(a) - score(b)`
/// does not share the sign of the full-set difference. A zero full-set
/// difference gives 1.
pub fn paired_bootstrap_stats<S>(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    score: S,
    resamples: usize,
    seed: u64,
) -> Result<f64>
where
    S: Fn(&[f64]) -> f64,
{
    check_aligned(a.len(), b.len())?;
    if resamples < 1000 {
        return Err(Error::invalid(format!("bootstrap needs at least 1000 resamples, got {resamples}")));
    }
    let full = score(&sum_stats(a.iter().cloned())) - score(&sum_stats(b.iter().cloned()));
    if full == 0.0 {
        return Ok(1.0);
    }
    let sign = full.signum();
    let n = a.len();
    let width = a[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sa = vec![0.0; width];
    let mut sb = vec![0.0; width];
    let mut flips = 0usize;
    for _ in 0..resamples {
        sa.iter_mut().for_each(|x| *x = 0.0);
        sb.iter_mut().for_each(|x| *x = 0.0);
        for _ in 0..n {
            let i = rng.gen_range(0..n);
            for (t, x) in sa.iter_mut().zip(&a[i]) {
                *t += x;
            }
            for (t, x) in sb.iter_mut().zip(&b[i]) {
                *t += x;
            }
        }
        if (score(&sa) - score(&sb)) * sign <= 0.0 {
            flips += 1;
        }
    }
    Ok(flips as f64 / resamples as f64)
}

/// [`paired_bootstrap_stats`] for a text metric.
pub fn paired_bootstrap<S: AsRef<str>>(
    outputs_a: &[Vec<S>],
    outputs_b: &[Vec<S>],
    references: &[Vec<S>],
    metric: Metric,
    resamples: usize,
    seed: u64,
) -> Result<f64> {
    check_aligned(outputs_a.len(), references.len())?;
    check_aligned(outputs_b.len(), references.len())?;
    let sa: Vec<Vec<f64>> = outputs_a.iter().zip(references).map(|(h, r)| metric.stats(h, r)).collect();
    let sb: Vec<Vec<f64>> = outputs_b.iter().zip(references).map(|(h, r)| metric.stats(h, r)).collect();
    paired_bootstrap_stats(&sa, &sb, |s| metric.score(s), resamples, seed)
}
