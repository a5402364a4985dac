//! Consistency between reward scores and human ratings: rating ingestion,
//! per-level reward summaries and Pearson correlation matrices.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracles::RewardKind;

/// Header of a ratings file.
pub const RATINGS_HEADER: [&str; 6] = ["id", "fluency", "relevance", "answerability", "complexity", "raters"];

/// A human rating dimension and its integer scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatingScale {
    Fluency,
    Relevance,
    Answerability,
    Complexity,
}

impl RatingScale {
    pub const ALL: [RatingScale; 4] = [
        RatingScale::Fluency,
        RatingScale::Relevance,
        RatingScale::Answerability,
        RatingScale::Complexity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RatingScale::Fluency => "fluency",
            RatingScale::Relevance => "relevance",
            RatingScale::Answerability => "answerability",
            RatingScale::Complexity => "complexity",
        }
    }

    /// Inclusive `(low, high)` bounds.
    pub fn bounds(self) -> (i64, i64) {
        match self {
            RatingScale::Fluency => (1, 5),
            RatingScale::Relevance | RatingScale::Complexity => (1, 3),
            RatingScale::Answerability => (0, 1),
        }
    }

    pub fn contains(self, v: f64) -> bool {
        let (lo, hi) = self.bounds();
        v.is_finite() && v >= lo as f64 && v <= hi as f64
    }

    /// Nearest level, halves rounded up.
    pub fn bucket(self, v: f64) -> i64 {
        let (lo, hi) = self.bounds();
        ((v + 0.5).floor() as i64).clamp(lo, hi)
    }

    /// The rating compared with `kind` in per-level summaries.
    pub fn for_reward(kind: RewardKind) -> RatingScale {
        match kind {
            RewardKind::Fluency => RatingScale::Fluency,
            RewardKind::Relevance => RatingScale::Relevance,
            RewardKind::Answerability => RatingScale::Answerability,
        }
    }
}

/// Mean ratings of one question. Sub-ratings are absent for questions the
/// raters found unreadable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub fluency: f64,
    pub relevance: Option<f64>,
    pub answerability: Option<f64>,
    pub complexity: Option<f64>,
    pub raters: usize,
}

impl Rating {
    pub fn get(&self, scale: RatingScale) -> Option<f64> {
        match scale {
            RatingScale::Fluency => Some(self.fluency),
            RatingScale::Relevance => self.relevance,
            RatingScale::Answerability => self.answerability,
            RatingScale::Complexity => self.complexity,
        }
    }
}

/// Ratings keyed by question id.
pub type HumanRatings = BTreeMap<String, Rating>;

#[derive(Default)]
struct Accum {
    sums: [f64; 4],
    weights: [f64; 4],
    raters: usize,
}

/// Parses a ratings file.
///
/// Rows sharing an id are averaged, each weighted by its `raters` count
/// (1 when the field is empty). Empty sub-rating fields are absent.
pub fn parse_human_ratings(path: &str, text: &str) -> Result<HumanRatings> {
    let err = |line: usize, message: String| Error::Ingestion { path: path.into(), line, message };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| err(1, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != RATINGS_HEADER {
        return Err(err(1, format!("expected header {}", RATINGS_HEADER.join(","))));
    }
    let mut acc: BTreeMap<String, Accum> = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| err(line, e.to_string()))?;
        let id = row[0].to_string();
        if id.is_empty() {
            return Err(err(line, "empty id".into()));
        }
        let raters = match &row[5] {
            "" => 1,
            s => s
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| err(line, format!("raters must be a positive integer, got {s:?}")))?,
        };
        let a = acc.entry(id).or_default();
        a.raters += raters;
        for (k, scale) in RatingScale::ALL.iter().enumerate() {
            let field = &row[k + 1];
            if field.is_empty() {
                if *scale == RatingScale::Fluency {
                    return Err(err(line, "fluency is required".into()));
                }
                continue;
            }
            let v: f64 = field
                .parse()
                .map_err(|_| err(line, format!("{} is not a number: {field:?}", scale.name())))?;
            if !scale.contains(v) {
                let (lo, hi) = scale.bounds();
                return Err(err(line, format!("{} {v} outside [{lo}, {hi}]", scale.name())));
            }
            a.sums[k] += v * raters as f64;
            a.weights[k] += raters as f64;
        }
    }
    Ok(acc
        .into_iter()
        .map(|(id, a)| {
            let mean = |k: usize| (a.weights[k] > 0.0).then(|| a.sums[k] / a.weights[k]);
            let r = Rating {
                fluency: mean(0).unwrap_or(f64::NAN),
                relevance: mean(1),
                answerability: mean(2),
                complexity: mean(3),
                raters: a.raters,
            };
            (id, r)
        })
        .collect())
}

pub fn load_human_ratings(path: impl AsRef<Path>) -> Result<HumanRatings> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_human_ratings(&path.display().to_string(), &text)
}

/// Reward statistics of one rating level. Statistics are absent when the
/// level has no questions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: i64,
    pub count: usize,
    pub min: Option<f64>,
    pub median: Option<f64>,
    pub max: Option<f64>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingLevelSummary {
    pub scale: RatingScale,
    pub levels: Vec<LevelStats>,
}

impl RatingLevelSummary {
    pub fn total(&self) -> usize {
        self.levels.iter().map(|l| l.count).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("level,count,min,median,max\n");
        let f = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for l in &self.levels {
            let _ = writeln!(s, "{},{},{},{},{}", l.level, l.count, f(l.min), f(l.median), f(l.max));
        }
        s
    }

    /// One `level,score` line per question, for external plotting.
    pub fn scores_csv(&self) -> String {
        let mut s = String::from("level,score\n");
        for l in &self.levels {
            for x in &l.scores {
                let _ = writeln!(s, "{},{x:.6}", l.level);
            }
        }
        s
    }
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Reward scores grouped by the rounded rating of the same question.
/// Questions missing either value are left out.
pub fn reward_rating_distribution(
    rewards: &BTreeMap<String, f64>,
    ratings: &BTreeMap<String, f64>,
    scale: RatingScale,
) -> Result<RatingLevelSummary> {
    let (lo, hi) = scale.bounds();
    let mut buckets: BTreeMap<i64, Vec<f64>> = (lo..=hi).map(|l| (l, Vec::new())).collect();
    for (id, &r) in rewards {
        let Some(&rating) = ratings.get(id) else { continue };
        if !r.is_finite() {
            return Err(Error::invalid(format!("reward for {id} is not finite")));
        }
        buckets.get_mut(&scale.bucket(rating)).expect("bucket in range").push(r);
    }
    let levels = buckets
        .into_iter()
        .map(|(level, mut scores)| {
            scores.sort_by(f64::total_cmp);
            LevelStats {
                level,
                count: scores.len(),
                min: scores.first().copied(),
                median: (!scores.is_empty()).then(|| median_sorted(&scores)),
                max: scores.last().copied(),
                scores,
            }
        })
        .collect();
    Ok(RatingLevelSummary { scale, levels })
}

/// Symmetric correlation matrix; `None` where a correlation is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PearsonMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl PearsonMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        self.values[i][j]
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!(",{}\n", self.names.join(","));
        for (name, row) in self.names.iter().zip(&self.values) {
            let cells: Vec<String> = row.iter().map(|v| v.map(|x| format!("{x:.6}")).unwrap_or_default()).collect();
            let _ = writeln!(s, "{name},{}", cells.join(","));
        }
        s
    }
}

/// Pearson correlation over the positions where both series are present.
pub fn pearson(x: &[Option<f64>], y: &[Option<f64>]) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = x.iter().zip(y).filter_map(|(a, b)| Some(((*a)?, (*b)?))).collect();
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in &pairs {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pairwise correlations of named series with absent values excluded
/// pairwise.
pub fn pearson_matrix(columns: &[(String, Vec<Option<f64>>)]) -> Result<PearsonMatrix> {
    let len = columns.first().map_or(0, |c| c.1.len());
    if columns.iter().any(|c| c.1.len() != len) {
        return Err(Error::invalid("correlation series have different lengths"));
    }
    if len < 2 {
        return Err(Error::invalid("correlation needs at least two observations"));
    }
    let k = columns.len();
    let mut values = vec![vec![None; k]; k];
    for i in 0..k {
        for j in i..k {
            let r = if i == j {
                pearson(&columns[i].1, &columns[i].1).map(|_| 1.0)
            } else {
                pearson(&columns[i].1, &columns[j].1)
            };
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(PearsonMatrix { names: columns.iter().map(|c| c.0.clone()).collect(), values })
}

/// Per-question reward scores keyed by id, in [`RewardKind::ALL`] order.
pub type RewardScores = BTreeMap<String, [Option<f64>; 3]>;

/// Everything the analysis step writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub summaries: Vec<(RewardKind, RatingLevelSummary)>,
    pub correlations: PearsonMatrix,
    pub rated_questions: usize,
}

/// Reward-per-level summaries and the correlation matrix over the
/// questions that have both ratings and reward scores.
pub fn analyze(ratings: &HumanRatings, rewards: &RewardScores) -> Result<AnalysisReport> {
    let ids: Vec<&String> = ratings.keys().filter(|id| rewards.contains_key(*id)).collect();
    if ids.is_empty() {
        return Err(Error::invalid("no question has both ratings and reward scores"));
    }
    let mut summaries = Vec::new();
    for kind in RewardKind::ALL {
        let scale = RatingScale::for_reward(kind);
        let r: BTreeMap<String, f64> = ids
            .iter()
            .filter_map(|id| Some(((*id).clone(), rewards[*id][kind.index()]?)))
            .collect();
        let h: BTreeMap<String, f64> =
            ids.iter().filter_map(|id| Some(((*id).clone(), ratings[*id].get(scale)?))).collect();
        summaries.push((kind, reward_rating_distribution(&r, &h, scale)?));
    }
    let mut columns: Vec<(String, Vec<Option<f64>>)> = Vec::new();
    for kind in RewardKind::ALL {
        columns.push((kind.column().to_string(), ids.iter().map(|id| rewards[*id][kind.index()]).collect()));
    }
    for scale in RatingScale::ALL {
        columns.push((scale.name().to_string(), ids.iter().map(|id| ratings[*id].get(scale)).collect()));
    }
    Ok(AnalysisReport { summaries, correlations: pearson_matrix(&columns)?, rated_questions: ids.len() })
}

/// Writes `summary_<kind>.csv`, `scores_<kind>.csv` and `correlations.csv`.
pub fn write_analysis(dir: impl AsRef<Path>, report: &AnalysisReport) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: String, body: String| {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))
    };
    for (kind, s) in &report.summaries {
        write(format!("summary_{}.csv", kind.name()), s.to_csv())?;
        write(format!("scores_{}.csv", kind.name()), s.scores_csv())?;
    }
    write("correlations.csv".into(), report.correlations.to_csv())
}

#[cfg(test)]
mod tests;
