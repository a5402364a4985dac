//! Relevance discriminator: a binary classifier over (document, question)
//! pairs trained with the focal loss.
//!
//! The question is read by a GRU whose input at each token is its embedding
//! plus a flag for whether the token occurs in the document. Every question
//! state attends bilinearly over GRU states of the document; the attended
//! context and the question state pass through a tanh layer, are averaged
//! over the question and mapped to a probability.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FocalParams, RelevanceScorer};
use crate::checkpoint::Checkpoint;
use crate::corpus::{truncate_document, vocab_from_sequences, Example, Vocabulary};
use crate::error::{Error, Result};
use crate::nn::{fit, FitOptions, Gradients, Graph, Gru, Linear, NodeId, ParamId, ParamStore};
use crate::Scalar;

pub const CHECKPOINT_KIND: &str = "discriminator";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscriminatorConfig {
    pub hidden_size: usize,
    pub embedding_size: usize,
    pub max_vocab: usize,
    pub min_freq: usize,
    /// Share of labeled pairs held out for the F1 report.
    pub heldout_fraction: f64,
    pub focal: FocalParams,
    pub train: FitOptions,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            hidden_size: 32,
            embedding_size: 32,
            max_vocab: 20_000,
            min_freq: 1,
            heldout_fraction: 0.1,
            focal: FocalParams::default(),
            train: FitOptions::default(),
        }
    }
}

/// Binary classification scores on held-out pairs (positive class).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BinaryScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub count: usize,
}

impl BinaryScores {
    pub fn from_predictions(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let (mut tp, mut fp, mut fneg, mut correct, mut n) = (0usize, 0usize, 0usize, 0usize, 0usize);
        for (gold, pred) in pairs {
            n += 1;
            match (gold, pred) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fneg += 1,
                (false, false) => {}
            }
            if gold == pred {
                correct += 1;
            }
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fneg);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        BinaryScores {
            precision,
            recall,
            f1,
            accuracy: ratio(correct, n),
            count: n,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RelevanceDiscriminator<F> {
    config: DiscriminatorConfig,
    vocab: Vocabulary,
    params: ParamStore<F>,
    emb: ParamId,
    doc_rnn: Gru,
    q_rnn: Gru,
    bilinear: ParamId,
    feature: Linear,
    classify: Linear,
    pub heldout: Option<BinaryScores>,
}

struct Pair<'a> {
    document: &'a [String],
    question: &'a [String],
    positive: bool,
}

impl<F: Scalar> RelevanceDiscriminator<F> {
    pub fn new(config: DiscriminatorConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        if config.hidden_size == 0 || config.embedding_size == 0 {
            return Err(Error::Config("discriminator sizes must be positive".into()));
        }
        config.focal.validate()?;
        let (h, d) = (config.hidden_size, config.embedding_size);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let emb = p.add_uniform("emb", vocab.len(), d, 0.1, &mut rng);
        let doc_rnn = Gru::new(&mut p, "doc_rnn", d, h, &mut rng);
        let q_rnn = Gru::new(&mut p, "q_rnn", d + 1, h, &mut rng);
        let bilinear = p.add_uniform("bilinear", h, h, (3.0 / h as f64).sqrt(), &mut rng);
        let feature = Linear::new(&mut p, "feature", 2 * h, h, &mut rng);
        let classify = Linear::new(&mut p, "classify", h, 1, &mut rng);
        Ok(RelevanceDiscriminator {
            config,
            vocab,
            params: p,
            emb,
            doc_rnn,
            q_rnn,
            bilinear,
            feature,
            classify,
            heldout: None,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn params(&self) -> &ParamStore<F> {
        &self.params
    }

    fn probability_on(&self, g: &mut Graph<'_, F>, document: &[String], question: &[String]) -> NodeId {
        let doc = truncate_document(document);
        let in_doc: HashSet<&str> = doc.iter().map(String::as_str).collect();
        let dx: Vec<NodeId> = doc.iter().map(|t| g.embed(self.emb, self.vocab.id(t))).collect();
        let states = self.doc_rnn.run(g, &dx);
        let keys: Vec<NodeId> = states.iter().map(|&s| g.matvec(self.bilinear, s)).collect();
        let mut h = g.zeros(self.config.hidden_size);
        let mut feats = Vec::with_capacity(question.len());
        for t in question {
            let e = g.embed(self.emb, self.vocab.id(t));
            let flag = g.constant(if in_doc.contains(t.as_str()) { F::one() } else { F::zero() });
            let x = g.concat(&[e, flag]);
            h = self.q_rnn.step(g, x, h);
            let scores = g.dot_each(&keys, h);
            let a = g.softmax(scores);
            let ctx = g.weighted_sum(a, &states);
            let hc = g.concat(&[h, ctx]);
            let f = self.feature.forward(g, hc);
            feats.push(g.tanh(f));
        }
        let pooled = if feats.is_empty() {
            g.zeros(self.config.hidden_size)
        } else {
            g.mean_of(&feats)
        };
        let z = self.classify.forward(g, pooled);
        g.sigmoid(z)
    }

    fn focal_loss_on(&self, g: &mut Graph<'_, F>, p: NodeId, positive: bool) -> NodeId {
        let focal = &self.config.focal;
        let p_true = if positive { p } else { g.one_minus(p) };
        let lp = g.log(p_true, F::of(1e-12));
        let weighted = if focal.lambda == 0.0 {
            lp
        } else {
            let rest = g.one_minus(p_true);
            let w = g.pow(rest, F::of(focal.lambda));
            g.mul(w, lp)
        };
        g.scale(weighted, -F::of(focal.alpha(positive)))
    }

    fn pair_loss(&self, params: &ParamStore<F>, pair: &Pair<'_>) -> (F, Gradients<F>) {
        let mut g = Graph::new(params);
        let p = self.probability_on(&mut g, pair.document, pair.question);
        let loss = self.focal_loss_on(&mut g, p, pair.positive);
        let mut grads = params.zero_grads();
        g.backward(loss, F::one(), &mut grads);
        (g.scalar(loss), grads)
    }

    pub fn probability(&self, document: &[String], question: &[String]) -> F {
        let mut g = Graph::new(&self.params);
        let p = self.probability_on(&mut g, document, question);
        g.scalar(p)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new(CHECKPOINT_KIND, &self.config, &self.vocab, &self.params);
        c.metrics = serde_json::json!({ "heldout": self.heldout });
        c
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ckpt = Checkpoint::load(path.as_ref(), CHECKPOINT_KIND, None)?;
        let mut m = RelevanceDiscriminator::new(ckpt.config()?, ckpt.vocab.clone(), 0)?;
        ckpt.restore(&mut m.params)?;
        m.heldout = ckpt
            .metrics
            .get("heldout")
            .and_then(|v| serde_json::from_value(v.clone()).ok());
        Ok(m)
    }
}

impl<F: Scalar> RelevanceScorer<F> for RelevanceDiscriminator<F> {
    fn relevance(&self, document: &[String], question: &[String]) -> F {
        self.probability(document, question)
    }
}

/// Trains on gold pairs (positive) and constructed negatives, holding out
/// `heldout_fraction` of the shuffled pairs for the F1 report.
pub fn train_relevance_discriminator<F: Scalar>(
    positives: &[Example],
    negatives: &[Example],
    config: &DiscriminatorConfig,
) -> Result<RelevanceDiscriminator<F>> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::invalid(
            "discriminator training needs both positive and negative pairs",
        ));
    }
    if !(0.0..1.0).contains(&config.heldout_fraction) {
        return Err(Error::Config("heldout_fraction must lie in [0, 1)".into()));
    }
    let vocab = vocab_from_sequences(
        positives
            .iter()
            .chain(negatives)
            .flat_map(|e| [e.document.as_slice(), e.question.as_slice()]),
        config.max_vocab,
        config.min_freq,
    );
    let mut model = RelevanceDiscriminator::new(config.clone(), vocab, config.train.seed)?;
    let mut pairs: Vec<Pair<'_>> = positives
        .iter()
        .map(|e| (e, true))
        .chain(negatives.iter().map(|e| (e, false)))
        .map(|(e, positive)| Pair {
            document: &e.document,
            question: &e.question,
            positive,
        })
        .collect();
    pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(config.train.seed ^ 0x5eed));
    let n_held = ((pairs.len() as f64) * config.heldout_fraction).round() as usize;
    let (held, train) = pairs.split_at(n_held.min(pairs.len() - 1));
    let mut params = model.params.clone();
    fit(&mut params, train, &config.train, |p, pair| model.pair_loss(p, pair))?;
    model.params = params;
    if !held.is_empty() {
        let half = F::of(0.5);
        model.heldout = Some(BinaryScores::from_predictions(
            held.iter()
                .map(|p| (p.positive, model.probability(p.document, p.question) >= half)),
        ));
    }
    Ok(model)
}
