//! Extractive span model: start and end distributions over document tokens
//! given a question.
//!
//! The document is read by a bidirectional GRU whose input carries a flag
//! for tokens that also occur in the question; the question's final GRU
//! state scores every document state bilinearly, once for starts and once
//! for ends.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{best_span, SpanScorer};
use crate::checkpoint::Checkpoint;
use crate::corpus::{truncate_document, vocab_from_sequences, Example, Vocabulary};
use crate::error::{Error, Result};
use crate::nn::{fit, softmax, FitOptions, Gradients, Graph, Gru, NodeId, ParamId, ParamStore};
use crate::Scalar;

pub const CHECKPOINT_KIND: &str = "qa";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QaConfig {
    pub hidden_size: usize,
    pub embedding_size: usize,
    pub max_vocab: usize,
    pub min_freq: usize,
    /// Longest predicted span, in tokens past the start.
    pub max_answer_len: usize,
    pub train: FitOptions,
}

impl Default for QaConfig {
    fn default() -> Self {
        QaConfig {
            hidden_size: 32,
            embedding_size: 32,
            max_vocab: 20_000,
            min_freq: 1,
            max_answer_len: 30,
            train: FitOptions::default(),
        }
    }
}

/// Exact match and token-overlap F1, averaged over examples.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QaScores {
    pub exact_match: f64,
    pub f1: f64,
    pub count: usize,
}

/// Token-overlap F1 between a predicted and a gold answer, counting
/// repeated tokens with multiplicity.
pub fn token_f1<S: AsRef<str>>(prediction: &[S], gold: &[S]) -> f64 {
    let mut counts: HashMap<&str, isize> = HashMap::new();
    for g in gold {
        *counts.entry(g.as_ref()).or_default() += 1;
    }
    let mut overlap = 0usize;
    for p in prediction {
        if let Some(c) = counts.get_mut(p.as_ref()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / prediction.len() as f64;
    let recall = overlap as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Scores the best-span predictions of any span model against gold spans.
/// Examples without spans are ignored.
pub fn evaluate_spans<F: Scalar, M: SpanScorer<F> + ?Sized>(
    model: &M,
    examples: &[Example],
    max_answer_len: usize,
) -> QaScores {
    let mut s = QaScores::default();
    for ex in examples {
        let Some(gold) = ex.answer_tokens() else { continue };
        let (ps, pe) = model.span_distributions(&ex.document, &ex.question);
        let (i, j, _) = best_span(&ps, &pe, max_answer_len);
        let pred = &ex.document[i..=j];
        if pred == gold {
            s.exact_match += 1.0;
        }
        s.f1 += token_f1(pred, gold);
        s.count += 1;
    }
    if s.count > 0 {
        s.exact_match /= s.count as f64;
        s.f1 /= s.count as f64;
    }
    s
}

#[derive(Debug, Clone)]
pub struct SpanQaModel<F> {
    config: QaConfig,
    vocab: Vocabulary,
    params: ParamStore<F>,
    emb: ParamId,
    doc_fwd: Gru,
    doc_bwd: Gru,
    q_rnn: Gru,
    w_start: ParamId,
    w_end: ParamId,
    pub dev_scores: Option<QaScores>,
}

impl<F: Scalar> SpanQaModel<F> {
    pub fn new(config: QaConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        if config.hidden_size == 0 || config.embedding_size == 0 || config.max_answer_len == 0 {
            return Err(Error::Config("qa sizes must be positive".into()));
        }
        let (h, d) = (config.hidden_size, config.embedding_size);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let scale = (3.0 / h as f64).sqrt();
        Ok(SpanQaModel {
            emb: p.add_uniform("emb", vocab.len(), d, 0.1, &mut rng),
            doc_fwd: Gru::new(&mut p, "doc_fwd", d + 1, h, &mut rng),
            doc_bwd: Gru::new(&mut p, "doc_bwd", d + 1, h, &mut rng),
            q_rnn: Gru::new(&mut p, "q_rnn", d, h, &mut rng),
            w_start: p.add_uniform("w_start", 2 * h, h, scale, &mut rng),
            w_end: p.add_uniform("w_end", 2 * h, h, scale, &mut rng),
            config,
            vocab,
            params: p,
            dev_scores: None,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn config(&self) -> &QaConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<F> {
        &self.params
    }

    /// Start and end score nodes (pre-softmax) over the truncated document.
    fn scores_on(&self, g: &mut Graph<'_, F>, document: &[String], question: &[String]) -> (NodeId, NodeId) {
        let doc = truncate_document(document);
        assert!(!doc.is_empty(), "span model over an empty document");
        let in_q: HashSet<&str> = question.iter().map(String::as_str).collect();
        let xs: Vec<NodeId> = doc
            .iter()
            .map(|t| {
                let e = g.embed(self.emb, self.vocab.id(t));
                let f = g.constant(if in_q.contains(t.as_str()) { F::one() } else { F::zero() });
                g.concat(&[e, f])
            })
            .collect();
        let fwd = self.doc_fwd.run(g, &xs);
        let rev: Vec<NodeId> = xs.iter().rev().copied().collect();
        let mut bwd = self.doc_bwd.run(g, &rev);
        bwd.reverse();
        let states: Vec<NodeId> = fwd.iter().zip(&bwd).map(|(&f, &b)| g.concat(&[f, b])).collect();
        let qx: Vec<NodeId> = question.iter().map(|t| g.embed(self.emb, self.vocab.id(t))).collect();
        let q = match self.q_rnn.run(g, &qx).last() {
            Some(&h) => h,
            None => g.zeros(self.config.hidden_size),
        };
        let qs = g.matvec(self.w_start, q);
        let qe = g.matvec(self.w_end, q);
        (g.dot_each(&states, qs), g.dot_each(&states, qe))
    }

    fn span_loss(&self, params: &ParamStore<F>, ex: &Example) -> (F, Gradients<F>) {
        let (s, e) = ex.answer_span.expect("training examples carry spans");
        let mut g = Graph::new(params);
        let (ss, es) = self.scores_on(&mut g, &ex.document, &ex.question);
        let ls = g.log_softmax(ss);
        let le = g.log_softmax(es);
        let a = g.pick(ls, s);
        let b = g.pick(le, e);
        let both = g.add(a, b);
        let loss = g.scale(both, F::of(-0.5));
        let mut grads = params.zero_grads();
        g.backward(loss, F::one(), &mut grads);
        (g.scalar(loss), grads)
    }

    /// Best span `(start, end)` within the configured length limit.
    pub fn predict(&self, document: &[String], question: &[String]) -> (usize, usize) {
        let (s, e) = self.span_distributions(document, question);
        let (i, j, _) = best_span(&s, &e, self.config.max_answer_len);
        (i, j)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new(CHECKPOINT_KIND, &self.config, &self.vocab, &self.params);
        c.metrics = serde_json::json!({ "dev": self.dev_scores });
        c
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ckpt = Checkpoint::load(path.as_ref(), CHECKPOINT_KIND, None)?;
        let mut m = SpanQaModel::new(ckpt.config()?, ckpt.vocab.clone(), 0)?;
        ckpt.restore(&mut m.params)?;
        m.dev_scores = ckpt
            .metrics
            .get("dev")
            .and_then(|v| serde_json::from_value(v.clone()).ok());
        Ok(m)
    }
}

impl<F: Scalar> SpanScorer<F> for SpanQaModel<F> {
    fn span_distributions(&self, document: &[String], question: &[String]) -> (Vec<F>, Vec<F>) {
        let mut g = Graph::new(&self.params);
        let (s, e) = self.scores_on(&mut g, document, question);
        (softmax(g.value(s)), softmax(g.value(e)))
    }
}

/// Maximizes the likelihood of gold start and end positions. Examples whose
/// span is missing or falls past the truncation point are skipped.
pub fn train_qa<F: Scalar>(train: &[Example], dev: &[Example], config: &QaConfig) -> Result<SpanQaModel<F>> {
    let usable: Vec<&Example> = train
        .iter()
        .filter(|e| matches!(e.answer_span, Some((_, end)) if end < truncate_document(&e.document).len()))
        .collect();
    if usable.is_empty() {
        return Err(Error::invalid("qa training needs examples with answer spans"));
    }
    let vocab = vocab_from_sequences(
        usable
            .iter()
            .flat_map(|e| [e.document.as_slice(), e.question.as_slice()]),
        config.max_vocab,
        config.min_freq,
    );
    let mut model = SpanQaModel::new(config.clone(), vocab, config.train.seed)?;
    let mut params = model.params.clone();
    fit(&mut params, &usable, &config.train, |p, ex| model.span_loss(p, ex))?;
    model.params = params;
    if dev.iter().any(|e| e.answer_span.is_some()) {
        model.dev_scores = Some(evaluate_spans(&model, dev, config.max_answer_len));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::check_gradients;
    use crate::oracles::fixed::UniformSpans;
    use rand::Rng;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn small() -> QaConfig {
        QaConfig {
            hidden_size: 6,
            embedding_size: 5,
            ..QaConfig::default()
        }
    }

    #[test]
    fn token_f1_hand_values() {
        assert_eq!(token_f1(&toks("a b"), &toks("a b")), 1.0);
        assert_eq!(token_f1(&toks("x"), &toks("a")), 0.0);
        // overlap 1, precision 1/2, recall 1/3
        assert!((token_f1(&toks("a x"), &toks("a b c")) - 0.4).abs() < 1e-12);
        // repeated tokens count once per gold occurrence
        assert!((token_f1(&toks("a a"), &toks("a")) - 2.0 / 3.0).abs() < 1e-12);
    }

    struct WholeDocument;

    impl SpanScorer<f64> for WholeDocument {
        fn span_distributions(&self, d: &[String], _: &[String]) -> (Vec<f64>, Vec<f64>) {
            let n = d.len();
            let mut s = vec![0.0; n];
            let mut e = vec![0.0; n];
            s[0] = 1.0;
            e[n - 1] = 1.0;
            (s, e)
        }
    }

    #[test]
    fn whole_document_prediction_scores_by_overlap() {
        let ex = Example {
            id: "a".into(),
            document: toks("the band formed in 1994 in leeds"),
            question: toks("when ?"),
            answer_span: Some((4, 4)),
            entities: vec![],
        };
        let s = evaluate_spans(&WholeDocument, &[ex], 100);
        // one shared token: precision 1/7, recall 1
        assert_eq!(s.exact_match, 0.0);
        assert!((s.f1 - 0.25).abs() < 1e-12, "{s:?}");
        assert_eq!(s.count, 1);
    }

    #[test]
    fn uniform_model_predicts_first_token() {
        let ex = Example {
            id: "a".into(),
            document: toks("x y z"),
            question: toks("q"),
            answer_span: Some((0, 0)),
            entities: vec![],
        };
        let s = evaluate_spans::<f64, _>(&UniformSpans, &[ex], 5);
        assert_eq!(s.exact_match, 1.0);
    }

    #[test]
    fn distributions_are_normalized_and_gradients_check() {
        let vocab = Vocabulary::from_tokens(["a", "b", "c"]);
        let m = SpanQaModel::<f64>::new(small(), vocab, 1).unwrap();
        let ex = Example {
            id: "a".into(),
            document: toks("a b c b"),
            question: toks("b zz"),
            answer_span: Some((1, 2)),
            entities: vec![],
        };
        let (s, e) = m.span_distributions(&ex.document, &ex.question);
        assert_eq!(s.len(), 4);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((e.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let r = check_gradients(&m.params, 1e-6, 1e-4, 1e-8, |p| m.span_loss(p, &ex));
        assert!(r.fraction_within() >= 0.95, "{r:?}");
    }

    #[test]
    fn learns_marked_span_copy_task() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let words: Vec<String> = (0..30).map(|i| format!("w{i}")).collect();
        let make = |rng: &mut ChaCha8Rng, id: usize| {
            let n = rng.gen_range(8..14);
            let mut doc: Vec<String> = (0..n).map(|_| words[rng.gen_range(0..30)].clone()).collect();
            let len = rng.gen_range(1..4);
            let at = rng.gen_range(0..n - len);
            doc.insert(at + len, ">".into());
            doc.insert(at, "<".into());
            Example {
                id: id.to_string(),
                document: doc,
                question: toks("which span is marked ?"),
                answer_span: Some((at + 1, at + len)),
                entities: vec![],
            }
        };
        let train: Vec<Example> = (0..300).map(|i| make(&mut rng, i)).collect();
        let dev: Vec<Example> = (0..50).map(|i| make(&mut rng, 1000 + i)).collect();
        let cfg = QaConfig {
            hidden_size: 12,
            embedding_size: 8,
            max_answer_len: 5,
            train: FitOptions {
                epochs: 12,
                batch_size: 16,
                learning_rate: 0.02,
                ..FitOptions::default()
            },
            ..QaConfig::default()
        };
        let m = train_qa::<f64>(&train, &dev, &cfg).unwrap();
        let s = m.dev_scores.unwrap();
        assert!(s.exact_match >= 0.9, "{s:?}");
    }

    #[test]
    fn no_spans_is_an_error() {
        let ex = Example {
            id: "a".into(),
            document: toks("a"),
            question: toks("b"),
            answer_span: None,
            entities: vec![],
        };
        assert!(train_qa::<f64>(&[ex], &[], &small()).is_err());
    }
}
