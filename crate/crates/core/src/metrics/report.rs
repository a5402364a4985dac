//! The model comparison table.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{length_ratio, mean_from_stats, paired_bootstrap_stats, reward_gain, Metric, ScoredOutputs};
use crate::error::{Error, Result};
use crate::oracles::{RewardKind, RewardSet};

/// Rendered column headers.
pub const REPORT_COLUMNS: [&str; 11] = [
    "Model", "F", "R", "A", "BLEU1", "BLEU4", "METEOR-exact", "ROUGE-L", "R-FLU", "R-REL", "R-ANS",
];

/// Significance threshold for the `*` flag.
pub const SIGNIFICANCE: f64 = 0.01;

/// Generated questions of one model plus, optionally, their reward scores.
#[derive(Debug, Clone)]
pub struct ModelOutputs {
    pub name: String,
    pub rewards: RewardSet,
    pub hypotheses: Vec<Vec<String>>,
    pub scored: Option<ScoredOutputs>,
}

/// One table row. Metric values are in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub rewards: RewardSet,
    pub bleu1: f64,
    pub bleu4: f64,
    pub meteor_exact: f64,
    pub rouge_l: f64,
    /// Reward change against the reference model; `None` on the reference
    /// row or when rewards were not scored.
    pub delta: [Option<f64>; 3],
    pub length_ratio: f64,
    /// Bootstrap p-values against the reference model, in column order
    /// BLEU1, BLEU4, METEOR-exact, ROUGE-L, R-FLU, R-REL, R-ANS.
    pub p_values: [Option<f64>; 7],
}

impl ReportRow {
    fn metrics(&self) -> [f64; 4] {
        [self.bleu1, self.bleu4, self.meteor_exact, self.rouge_l]
    }

    fn cells(&self) -> Vec<String> {
        let flag = |i: usize| if self.p_values[i].is_some_and(|p| p < SIGNIFICANCE) { "*" } else { "" };
        let mut out = vec![self.model.clone()];
        for k in RewardKind::ALL {
            out.push(if self.rewards.contains(k) { "x".into() } else { String::new() });
        }
        for (i, v) in self.metrics().iter().enumerate() {
            out.push(format!("{:.2}{}", v * 100.0, flag(i)));
        }
        for (k, d) in self.delta.iter().enumerate() {
            out.push(match d {
                Some(d) => format!("{d:+.2}{}", flag(4 + k)),
                None => "-".into(),
            });
        }
        out
    }
}

/// Rows plus the name of the model they are compared against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub reference_model: String,
    pub rows: Vec<ReportRow>,
}

impl ReportTable {
    /// Comma-separated table with a trailing `LengthRatio` column.
    pub fn to_csv(&self) -> String {
        let mut s = REPORT_COLUMNS.join(",");
        s.push_str(",LengthRatio\n");
        for r in &self.rows {
            let cells: Vec<String> = r.cells().into_iter().map(|c| csv_field(&c)).collect();
            let _ = writeln!(s, "{},{:.4}", cells.join(","), r.length_ratio);
        }
        s
    }

    /// Column-aligned plain text.
    pub fn to_text(&self) -> String {
        let mut grid: Vec<Vec<String>> = vec![REPORT_COLUMNS.iter().map(|c| c.to_string()).collect()];
        grid.extend(self.rows.iter().map(ReportRow::cells));
        let widths: Vec<usize> = (0..REPORT_COLUMNS.len())
            .map(|c| grid.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut s = String::new();
        for (i, row) in grid.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (v, w))| if c == 0 { format!("{v:<w$}") } else { format!("{v:>w$}") })
                .collect();
            s.push_str(line.join("  ").trim_end());
            s.push('\n');
            if i == 0 {
                s.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
                s.push('\n');
            }
        }
        let _ = writeln!(s, "\n* p < {SIGNIFICANCE} against {} (paired bootstrap)", self.reference_model);
        s
    }
}

fn csv_field(v: &str) -> String {
    if v.contains([',', '"', '\n']) {
        format!("\"{}\"", v.replace('"', "\"\""))
    } else {
        v.to_string()
    }
}

/// Scores every model against `references` and compares each with
/// `models[reference]`.
pub fn evaluate(
    references: &[Vec<String>],
    models: &[ModelOutputs],
    reference: usize,
    resamples: usize,
    seed: u64,
) -> Result<ReportTable> {
    let base = models
        .get(reference)
        .ok_or_else(|| Error::invalid(format!("reference model index {reference} out of range")))?;
    for m in models {
        super::check_aligned(m.hypotheses.len(), references.len())
            .map_err(|e| Error::invalid(format!("model {}: {e}", m.name)))?;
    }
    let stats_of = |m: &ModelOutputs, metric: Metric| -> Vec<Vec<f64>> {
        m.hypotheses.par_iter().zip(references).map(|(h, r)| metric.stats(h, r)).collect()
    };
    let base_stats: Vec<Vec<Vec<f64>>> = Metric::ALL.iter().map(|&mt| stats_of(base, mt)).collect();
    let mut rows = Vec::with_capacity(models.len());
    for (mi, m) in models.iter().enumerate() {
        let stats: Vec<Vec<Vec<f64>>> = Metric::ALL.iter().map(|&mt| stats_of(m, mt)).collect();
        let score = |i: usize| Metric::ALL[i].score(&super::sum_stats(stats[i].iter().cloned()));
        let mut p_values = [None; 7];
        let mut delta = [None; 3];
        if mi != reference {
            for (i, mt) in Metric::ALL.iter().enumerate() {
                p_values[i] = Some(paired_bootstrap_stats(
                    &stats[i],
                    &base_stats[i],
                    |s| mt.score(s),
                    resamples,
                    seed,
                )?);
            }
            if let (Some(ms), Some(bs)) = (&m.scored, &base.scored) {
                delta = reward_gain(ms, bs)?;
                for k in 0..3 {
                    let (a, b): (Vec<Vec<f64>>, Vec<Vec<f64>>) = ms
                        .rewards
                        .iter()
                        .zip(&bs.rewards)
                        .filter_map(|(x, y)| Some((vec![x[k]?, 1.0], vec![y[k]?, 1.0])))
                        .unzip();
                    if !a.is_empty() {
                        p_values[4 + k] = Some(paired_bootstrap_stats(&a, &b, mean_from_stats, resamples, seed)?);
                    }
                }
            }
        }
        rows.push(ReportRow {
            model: m.name.clone(),
            rewards: m.rewards,
            bleu1: score(0),
            bleu4: score(1),
            meteor_exact: score(2),
            rouge_l: score(3),
            delta,
            length_ratio: length_ratio(&m.hypotheses, references)?,
            p_values,
        });
    }
    Ok(ReportTable { reference_model: base.name.clone(), rows })
}
