//! Reward functions and the oracle models that score generated questions.
//!
//! * fluency: `R_flu = -exp(-(1/T) sum_t log P_LM(y_t | y_<t))`, minus the
//!   perplexity of the question under a language model;
//! * relevance: `R_rel = -log(1 - P_rel + eps)` for a discriminator's
//!   probability that the question belongs with the document;
//! * answerability: `R_ans = -log(1 - max sqrt(P_s(i) P_e(j)) + eps)` with
//!   the maximum over spans `i <= j <= i + l` of an extractive QA model.
//!
//! Each reward consumes its model through a small trait so that trained
//! models, fixed stand-ins and externally supplied scorers are
//! interchangeable.

pub mod discriminator;
pub mod lm;
pub mod negatives;
pub mod qa;

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Scalar;

pub use discriminator::{DiscriminatorConfig, RelevanceDiscriminator};
pub use lm::{LanguageModel, LmConfig};
pub use negatives::{
    entity_inventory, make_inter_doc_entity_swap, make_intra_doc_entity_swap,
    make_negatives, make_question_swap, EntityInventory, NegativeKind, NegativeSet,
};
pub use qa::{QaConfig, QaScores, SpanQaModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub epsilon: f64,
    /// Longest answer span considered, in tokens past the start.
    pub max_answer_len: usize,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            epsilon: 1e-12,
            max_answer_len: 30,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1e-6) {
            return Err(Error::Config("epsilon must lie in (0, 1e-6]".into()));
        }
        if self.max_answer_len == 0 {
            return Err(Error::Config("max_answer_len must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-token conditional probabilities `P(y_t | y_<t)` of a question.
pub trait TokenScorer<F>: Sync {
    fn token_probabilities(&self, question: &[String]) -> Vec<F>;
}

/// Probability that `question` was written for `document`.
pub trait RelevanceScorer<F>: Sync {
    fn relevance(&self, document: &[String], question: &[String]) -> F;
}

/// Start and end distributions over document positions.
pub trait SpanScorer<F>: Sync {
    fn span_distributions(&self, document: &[String], question: &[String]) -> (Vec<F>, Vec<F>);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RewardKind {
    Fluency,
    Relevance,
    Answerability,
}

impl RewardKind {
    pub const ALL: [RewardKind; 3] = [RewardKind::Fluency, RewardKind::Relevance, RewardKind::Answerability];

    pub fn letter(self) -> &'static str {
        match self {
            RewardKind::Fluency => "F",
            RewardKind::Relevance => "R",
            RewardKind::Answerability => "A",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            RewardKind::Fluency => "fluency",
            RewardKind::Relevance => "relevance",
            RewardKind::Answerability => "answerability",
        }
    }

    /// Report column header, e.g. `R-FLU`.
    pub fn column(self) -> &'static str {
        match self {
            RewardKind::Fluency => "R-FLU",
            RewardKind::Relevance => "R-REL",
            RewardKind::Answerability => "R-ANS",
        }
    }
}

impl fmt::Display for RewardKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.letter())
    }
}

/// Which rewards are switched on, written as letters such as `F,R,A`,
/// `FA` or `none`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RewardSet(pub [bool; 3]);

impl TryFrom<String> for RewardSet {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<RewardSet> for String {
    fn from(r: RewardSet) -> String {
        r.to_string()
    }
}

impl RewardSet {
    pub const NONE: RewardSet = RewardSet([false; 3]);
    pub const ALL: RewardSet = RewardSet([true; 3]);

    pub fn contains(&self, k: RewardKind) -> bool {
        self.0[k.index()]
    }

    pub fn is_empty(&self) -> bool {
        !self.0.iter().any(|&b| b)
    }

    pub fn iter(&self) -> impl Iterator<Item = RewardKind> + '_ {
        RewardKind::ALL.into_iter().filter(|k| self.contains(*k))
    }
}

impl FromStr for RewardSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut set = RewardSet::NONE;
        if s.trim().eq_ignore_ascii_case("none") || s.trim().is_empty() {
            return Ok(set);
        }
        for c in s.chars().filter(|c| !matches!(c, ',' | ' ' | '+')) {
            let k = match c.to_ascii_uppercase() {
                'F' => RewardKind::Fluency,
                'R' => RewardKind::Relevance,
                'A' => RewardKind::Answerability,
                _ => return Err(Error::Config(format!("unknown reward `{c}` in `{s}` (expected F, R, A)"))),
            };
            set.0[k.index()] = true;
        }
        Ok(set)
    }
}

impl fmt::Display for RewardSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("none");
        }
        let letters: Vec<&str> = self.iter().map(|k| k.letter()).collect();
        f.write_str(&letters.join(","))
    }
}

fn clamp_prob<F: Scalar>(p: F, eps: F) -> F {
    p.max(eps).min(F::one())
}

fn check_probability<F: Scalar>(what: &str, p: F) -> Result<()> {
    if p.is_finite() && p >= F::zero() && p <= F::one() + F::of(1e-6) {
        Ok(())
    } else {
        Err(Error::OracleMismatch(format!("{what} returned {p}, outside [0, 1]")))
    }
}

/// `-exp(-(1/T) sum_t log p_t)` over per-token probabilities, each clamped
/// to `[eps, 1]`.
pub fn fluency_from_probabilities<F: Scalar>(probs: &[F], cfg: &RewardConfig) -> Result<F> {
    if probs.is_empty() {
        return Err(Error::invalid("fluency reward of an empty question"));
    }
    let eps = F::of(cfg.epsilon);
    let mut sum = F::zero();
    for &p in probs {
        check_probability("language model", p)?;
        sum += clamp_prob(p, eps).ln();
    }
    Ok(-(-sum / F::from_usize(probs.len()).unwrap()).exp())
}

pub fn fluency_reward<F: Scalar, M: TokenScorer<F> + ?Sized>(
    question: &[String],
    lm: &M,
    cfg: &RewardConfig,
) -> Result<F> {
    if question.is_empty() {
        return Err(Error::invalid("fluency reward of an empty question"));
    }
    let probs = lm.token_probabilities(question);
    if probs.len() != question.len() {
        return Err(Error::OracleMismatch(format!(
            "language model scored {} of {} tokens",
            probs.len(),
            question.len()
        )));
    }
    fluency_from_probabilities(&probs, cfg)
}

/// `-log(1 - p + eps)`.
pub fn relevance_from_probability<F: Scalar>(p: F, cfg: &RewardConfig) -> Result<F> {
    check_probability("relevance model", p)?;
    let p = p.min(F::one());
    Ok(-(F::one() - p + F::of(cfg.epsilon)).ln())
}

pub fn relevance_reward<F: Scalar, M: RelevanceScorer<F> + ?Sized>(
    document: &[String],
    question: &[String],
    disc: &M,
    cfg: &RewardConfig,
) -> Result<F> {
    relevance_from_probability(disc.relevance(document, question), cfg)
}

/// Best span `(i, j, sqrt(P_s(i) P_e(j)))` with `i <= j <= i + max_len`.
///
/// For each end `j` the best start is the maximum of `P_s` over the window
/// `[j - max_len, j]`, kept in a monotone deque; earlier spans win ties.
pub fn best_span<F: Scalar>(start: &[F], end: &[F], max_len: usize) -> (usize, usize, F) {
    assert_eq!(start.len(), end.len(), "start and end distributions differ in length");
    assert!(!start.is_empty(), "span search over an empty document");
    let mut window: VecDeque<usize> = VecDeque::new();
    let mut best = (0, 0, F::neg_infinity());
    for j in 0..start.len() {
        while window.back().is_some_and(|&b| start[b] < start[j]) {
            window.pop_back();
        }
        window.push_back(j);
        while window.front().is_some_and(|&f| f + max_len < j) {
            window.pop_front();
        }
        let i = window[0];
        let score = (start[i] * end[j]).sqrt();
        if score > best.2 {
            best = (i, j, score);
        }
    }
    best
}

/// `-log(1 - best span score + eps)`.
pub fn answerability_from_distributions<F: Scalar>(
    start: &[F],
    end: &[F],
    cfg: &RewardConfig,
) -> Result<F> {
    if start.is_empty() || start.len() != end.len() {
        return Err(Error::OracleMismatch(format!(
            "span distributions of lengths {} and {}",
            start.len(),
            end.len()
        )));
    }
    for &p in start.iter().chain(end) {
        check_probability("span model", p)?;
    }
    let (_, _, s) = best_span(start, end, cfg.max_answer_len);
    Ok(-(F::one() - s.min(F::one()) + F::of(cfg.epsilon)).ln())
}

pub fn answerability_reward<F: Scalar, M: SpanScorer<F> + ?Sized>(
    document: &[String],
    question: &[String],
    qa: &M,
    cfg: &RewardConfig,
) -> Result<F> {
    let (s, e) = qa.span_distributions(document, question);
    let n = crate::corpus::truncate_document(document).len();
    if s.len() != n {
        return Err(Error::OracleMismatch(format!(
            "span model scored {} positions of a {n}-token document",
            s.len()
        )));
    }
    answerability_from_distributions(&s, &e, cfg)
}

/// Class weights and focusing parameter of the focal loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FocalParams {
    pub alpha_positive: f64,
    pub alpha_negative: f64,
    pub lambda: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        FocalParams {
            alpha_positive: 0.75,
            alpha_negative: 0.25,
            lambda: 2.0,
        }
    }
}

impl FocalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_positive > 0.0 && self.alpha_negative > 0.0 && self.lambda >= 0.0) {
            return Err(Error::Config("focal alphas must be > 0 and lambda >= 0".into()));
        }
        Ok(())
    }

    pub fn alpha(&self, positive: bool) -> f64 {
        if positive {
            self.alpha_positive
        } else {
            self.alpha_negative
        }
    }
}

/// `-alpha (1 - p)^lambda log p` for the probability `p` of the true class,
/// clamped below at `eps`.
pub fn focal_loss<F: Scalar>(p_true: F, alpha: F, lambda: F, eps: F) -> F {
    let p = clamp_prob(p_true, eps);
    let w = if lambda == F::zero() {
        F::one()
    } else {
        (F::one() - p).powf(lambda)
    };
    -alpha * w * p.ln()
}

/// Reward values for one question; `None` where the reward is disabled or
/// its oracle failed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardValues<F> {
    pub values: [Option<F>; 3],
}

impl<F: Copy> RewardValues<F> {
    pub fn get(&self, k: RewardKind) -> Option<F> {
        self.values[k.index()]
    }
}

/// The oracles used for reward computation. Missing oracles disable their
/// reward.
#[derive(Clone, Copy)]
pub struct Oracles<'a, F> {
    pub lm: Option<&'a dyn TokenScorer<F>>,
    pub relevance: Option<&'a dyn RelevanceScorer<F>>,
    pub qa: Option<&'a dyn SpanScorer<F>>,
    pub config: RewardConfig,
}

impl<'a, F: Scalar> Oracles<'a, F> {
    pub fn none() -> Self {
        Oracles {
            lm: None,
            relevance: None,
            qa: None,
            config: RewardConfig::default(),
        }
    }

    pub fn available(&self) -> RewardSet {
        RewardSet([self.lm.is_some(), self.relevance.is_some(), self.qa.is_some()])
    }

    pub fn reward(&self, kind: RewardKind, document: &[String], question: &[String]) -> Result<F> {
        let missing = || Error::Config(format!("no oracle loaded for reward {kind}"));
        match kind {
            RewardKind::Fluency => fluency_reward(question, self.lm.ok_or_else(missing)?, &self.config),
            RewardKind::Relevance => {
                relevance_reward(document, question, self.relevance.ok_or_else(missing)?, &self.config)
            }
            RewardKind::Answerability => {
                answerability_reward(document, question, self.qa.ok_or_else(missing)?, &self.config)
            }
        }
    }

    /// Computes every reward in `which`; failures become `None` and are
    /// reported in the second return value.
    pub fn rewards(
        &self,
        which: RewardSet,
        document: &[String],
        question: &[String],
    ) -> (RewardValues<F>, Vec<(RewardKind, Error)>) {
        let mut out = RewardValues::default();
        let mut failures = Vec::new();
        for k in which.iter() {
            match self.reward(k, document, question) {
                Ok(v) if v.is_finite() => out.values[k.index()] = Some(v),
                Ok(v) => failures.push((k, Error::OracleMismatch(format!("reward {k} is {v}")))),
                Err(e) => failures.push((k, e)),
            }
        }
        (out, failures)
    }

    /// Rewards in `which` for every `(document, question)` pair, in
    /// parallel; failed rewards are `None`.
    pub fn score_all(&self, which: RewardSet, pairs: &[(&[String], &[String])]) -> Vec<RewardValues<F>> {
        pairs.par_iter().map(|(d, q)| self.rewards(which, d, q).0).collect()
    }
}

/// Fixed scorers, for testing and for runs without trained oracles.
pub mod fixed {
    use super::*;

    /// Assigns `1 / vocab_size` to every token.
    #[derive(Debug, Clone, Copy)]
    pub struct UniformTokens {
        pub vocab_size: usize,
    }

    impl<F: Scalar> TokenScorer<F> for UniformTokens {
        fn token_probabilities(&self, question: &[String]) -> Vec<F> {
            vec![F::one() / F::from_usize(self.vocab_size).unwrap(); question.len()]
        }
    }

    #[derive(Debug, Clone, Copy)]
    pub struct ConstantRelevance<F>(pub F);

    impl<F: Scalar> RelevanceScorer<F> for ConstantRelevance<F> {
        fn relevance(&self, _: &[String], _: &[String]) -> F {
            self.0
        }
    }

    /// Uniform start and end distributions over the document.
    #[derive(Debug, Clone, Copy)]
    pub struct UniformSpans;

    impl<F: Scalar> SpanScorer<F> for UniformSpans {
        fn span_distributions(&self, document: &[String], _: &[String]) -> (Vec<F>, Vec<F>) {
            let n = crate::corpus::truncate_document(document).len();
            let p = F::one() / F::from_usize(n).unwrap();
            (vec![p; n], vec![p; n])
        }
    }
}
