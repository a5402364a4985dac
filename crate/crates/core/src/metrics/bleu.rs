use std::collections::HashMap;

use super::{check_aligned, sum_stats};
use crate::error::Result;

/// Precision used in place of a zero n-gram precision.
pub const BLEU_EPSILON: f64 = 1e-9;

fn ngrams<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    m
}

/// `[matches_1..matches_N, totals_1..totals_N, hyp_len, ref_len]` for one
/// pair, with matches clipped by reference counts.
pub fn bleu_stats<S: AsRef<str>>(hyp: &[S], reference: &[S], max_n: usize) -> Vec<f64> {
    let mut out = vec![0.0; 2 * max_n + 2];
    for n in 1..=max_n {
        let h = ngrams(hyp, n);
        let r = ngrams(reference, n);
        let matched: usize = h.iter().map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0))).sum();
        out[n - 1] = matched as f64;
        out[max_n + n - 1] = hyp.len().saturating_sub(n - 1) as f64;
    }
    out[2 * max_n] = hyp.len() as f64;
    out[2 * max_n + 1] = reference.len() as f64;
    out
}

/// Corpus BLEU from summed [`bleu_stats`]: brevity penalty times the
/// geometric mean of modified precisions, where a zero precision counts as
/// [`BLEU_EPSILON`].
pub fn bleu_from_stats(s: &[f64], max_n: usize) -> f64 {
    let (c, r) = (s[2 * max_n], s[2 * max_n + 1]);
    if c == 0.0 {
        return 0.0;
    }
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    let mut geo = 1.0;
    for n in 0..max_n {
        let p = if s[n] == 0.0 || s[max_n + n] == 0.0 {
            BLEU_EPSILON
        } else {
            s[n] / s[max_n + n]
        };
        geo *= p.powf(1.0 / max_n as f64);
    }
    bp * geo
}

/// Corpus-level BLEU over aligned hypothesis/reference pairs.
pub fn bleu<S: AsRef<str>>(hyps: &[Vec<S>], refs: &[Vec<S>], max_n: usize) -> Result<f64> {
    check_aligned(hyps.len(), refs.len())?;
    let stats = sum_stats(hyps.iter().zip(refs).map(|(h, r)| bleu_stats(h, r, max_n)));
    Ok(bleu_from_stats(&stats, max_n))
}
