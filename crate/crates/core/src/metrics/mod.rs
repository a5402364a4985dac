//! Automatic evaluation: corpus BLEU, ROUGE-L, METEOR with exact matching
//! only, length ratio, reward gains and paired-bootstrap significance.
//!
//! Every metric is computed from additive per-example statistics so that
//! bootstrap resampling only re-sums vectors.

mod bleu;
mod bootstrap;
mod meteor;
pub mod report;
mod rouge;

use crate::error::{Error, Result};

pub use bleu::{bleu, bleu_from_stats, bleu_stats, BLEU_EPSILON};
pub use bootstrap::{paired_bootstrap, paired_bootstrap_stats};
pub use meteor::{meteor_alignment, meteor_exact, meteor_pair, Alignment};
pub use report::{evaluate, ModelOutputs, ReportRow, ReportTable, REPORT_COLUMNS};
pub use rouge::{lcs_len, rouge_l, rouge_l_pair};

/// A metric that can be resampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Bleu1,
    Bleu4,
    MeteorExact,
    RougeL,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Bleu1, Metric::Bleu4, Metric::MeteorExact, Metric::RougeL];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Bleu1 => "BLEU1",
            Metric::Bleu4 => "BLEU4",
            Metric::MeteorExact => "METEOR-exact",
            Metric::RougeL => "ROUGE-L",
        }
    }

    /// Additive statistics of one pair.
    pub fn stats<S: AsRef<str>>(self, hyp: &[S], reference: &[S]) -> Vec<f64> {
        match self {
            Metric::Bleu1 => bleu_stats(hyp, reference, 1),
            Metric::Bleu4 => bleu_stats(hyp, reference, 4),
            Metric::MeteorExact => vec![meteor_pair(hyp, reference), 1.0],
            Metric::RougeL => vec![rouge_l_pair(hyp, reference), 1.0],
        }
    }

    /// Score from summed statistics.
    pub fn score(self, summed: &[f64]) -> f64 {
        match self {
            Metric::Bleu1 => bleu_from_stats(summed, 1),
            Metric::Bleu4 => bleu_from_stats(summed, 4),
            Metric::MeteorExact | Metric::RougeL => mean_from_stats(summed),
        }
    }

    pub fn corpus<S: AsRef<str>>(self, hyps: &[Vec<S>], refs: &[Vec<S>]) -> Result<f64> {
        check_aligned(hyps.len(), refs.len())?;
        Ok(self.score(&sum_stats(hyps.iter().zip(refs).map(|(h, r)| self.stats(h, r)))))
    }
}

/// `[value, 1]` statistics averaged.
pub fn mean_from_stats(summed: &[f64]) -> f64 {
    if summed[1] == 0.0 {
        0.0
    } else {
        summed[0] / summed[1]
    }
}

pub(crate) fn sum_stats(rows: impl IntoIterator<Item = Vec<f64>>) -> Vec<f64> {
    let mut total: Vec<f64> = Vec::new();
    for r in rows {
        if total.is_empty() {
            total = vec![0.0; r.len()];
        }
        for (t, x) in total.iter_mut().zip(&r) {
            *t += x;
        }
    }
    total
}

pub(crate) fn check_aligned(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!(
            "hypothesis and reference counts differ ({a} vs {b})"
        )));
    }
    if b == 0 {
        return Err(Error::invalid("no references to score against"));
    }
    Ok(())
}

/// `mean(|hyp|) / mean(|ref|)`.
pub fn length_ratio<S: AsRef<str>>(hyps: &[Vec<S>], refs: &[Vec<S>]) -> Result<f64> {
    if refs.is_empty() {
        return Err(Error::invalid("length ratio over an empty reference set"));
    }
    let h: usize = hyps.iter().map(Vec::len).sum();
    let r: usize = refs.iter().map(Vec::len).sum();
    if r == 0 {
        return Err(Error::invalid("references are all empty"));
    }
    Ok((h as f64 / hyps.len().max(1) as f64) / (r as f64 / refs.len() as f64))
}

/// Per-example reward values of one output set, tagged with the oracle
/// checkpoints that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredOutputs {
    pub oracle_fingerprint: String,
    pub rewards: Vec<[Option<f64>; 3]>,
}

/// Mean reward of `model` minus mean reward of `baseline`, per reward,
/// over examples where both are defined.
pub fn reward_gain(model: &ScoredOutputs, baseline: &ScoredOutputs) -> Result<[Option<f64>; 3]> {
    if model.oracle_fingerprint != baseline.oracle_fingerprint {
        return Err(Error::OracleMismatch(format!(
            "outputs were scored by different oracles ({} vs {})",
            model.oracle_fingerprint, baseline.oracle_fingerprint
        )));
    }
    if model.rewards.len() != baseline.rewards.len() {
        return Err(Error::invalid("reward lists are not aligned"));
    }
    let mut out = [None; 3];
    for (k, slot) in out.iter_mut().enumerate() {
        let pairs: Vec<(f64, f64)> = model
            .rewards
            .iter()
            .zip(&baseline.rewards)
            .filter_map(|(m, b)| Some((m[k]?, b[k]?)))
            .collect();
        if !pairs.is_empty() {
            let n = pairs.len() as f64;
            *slot = Some(pairs.iter().map(|p| p.0).sum::<f64>() / n - pairs.iter().map(|p| p.1).sum::<f64>() / n);
        }
    }
    Ok(out)
}
