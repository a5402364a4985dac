//! Recurrent language model over question text.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TokenScorer;
use crate::checkpoint::Checkpoint;
use crate::corpus::{vocab_from_sequences, Example, Vocabulary, BOS, EOS};
use crate::error::{Error, Result};
use crate::nn::{fit, FitOptions, Graph, Gradients, Gru, Linear, NodeId, ParamId, ParamStore};
use crate::Scalar;

pub const CHECKPOINT_KIND: &str = "lm";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmConfig {
    pub hidden_size: usize,
    pub embedding_size: usize,
    pub max_vocab: usize,
    pub min_freq: usize,
    pub train: FitOptions,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            hidden_size: 64,
            embedding_size: 32,
            max_vocab: 20_000,
            min_freq: 1,
            train: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LanguageModel<F> {
    config: LmConfig,
    vocab: Vocabulary,
    params: ParamStore<F>,
    emb: ParamId,
    rnn: Gru,
    out: Linear,
    /// Perplexity on the held-out questions seen at training time.
    pub dev_perplexity: Option<f64>,
}

impl<F: Scalar> LanguageModel<F> {
    pub fn new(config: LmConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        if config.hidden_size == 0 || config.embedding_size == 0 {
            return Err(Error::Config("lm sizes must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let emb = p.add_uniform("emb", vocab.len(), config.embedding_size, 0.1, &mut rng);
        let rnn = Gru::new(&mut p, "rnn", config.embedding_size, config.hidden_size, &mut rng);
        let out = Linear::new(&mut p, "out", config.hidden_size, vocab.len(), &mut rng);
        Ok(LanguageModel {
            config,
            vocab,
            params: p,
            emb,
            rnn,
            out,
            dev_perplexity: None,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn config(&self) -> &LmConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<F> {
        &self.params
    }

    /// Log-probability nodes of each id in `ids`, conditioned on BOS and
    /// the preceding ids.
    fn log_probs_on(&self, g: &mut Graph<'_, F>, ids: &[usize]) -> Vec<NodeId> {
        let mut h = g.zeros(self.config.hidden_size);
        let mut prev = BOS;
        let mut out = Vec::with_capacity(ids.len());
        for &y in ids {
            let x = g.embed(self.emb, prev);
            h = self.rnn.step(g, x, h);
            let logits = self.out.forward(g, h);
            let lp = g.log_softmax(logits);
            out.push(g.pick(lp, y));
            prev = y;
        }
        out
    }

    fn training_loss(&self, params: &ParamStore<F>, question: &[String]) -> (F, Gradients<F>) {
        let mut ids = self.vocab.encode(question);
        ids.push(EOS);
        let mut g = Graph::new(params);
        let lps = self.log_probs_on(&mut g, &ids);
        let all = g.concat(&lps);
        let total = g.sum(all);
        let loss = g.scale(total, -F::one() / F::from_usize(ids.len()).unwrap());
        let mut grads = params.zero_grads();
        g.backward(loss, F::one(), &mut grads);
        (g.scalar(loss), grads)
    }

    /// `log P(y_t | y_<t)` for each question token (no end marker).
    pub fn token_log_probs(&self, question: &[String]) -> Vec<F> {
        let ids = self.vocab.encode(question);
        let mut g = Graph::new(&self.params);
        let lps = self.log_probs_on(&mut g, &ids);
        lps.iter().map(|&n| g.scalar(n)).collect()
    }

    /// Corpus-level perplexity `exp(total NLL / total tokens)` over question
    /// tokens, end marker excluded.
    pub fn perplexity<'a>(&self, questions: impl IntoIterator<Item = &'a [String]>) -> f64 {
        let (mut nll, mut n) = (0.0, 0usize);
        for q in questions {
            nll -= self.token_log_probs(q).iter().map(|x| x.f64()).sum::<f64>();
            n += q.len();
        }
        (nll / n.max(1) as f64).exp()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new(CHECKPOINT_KIND, &self.config, &self.vocab, &self.params);
        c.metrics = serde_json::json!({ "dev_perplexity": self.dev_perplexity });
        c
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ckpt = Checkpoint::load(path.as_ref(), CHECKPOINT_KIND, None)?;
        let mut m = LanguageModel::new(ckpt.config()?, ckpt.vocab.clone(), 0)?;
        ckpt.restore(&mut m.params)?;
        m.dev_perplexity = ckpt.metrics.get("dev_perplexity").and_then(|v| v.as_f64());
        Ok(m)
    }
}

impl<F: Scalar> TokenScorer<F> for LanguageModel<F> {
    fn token_probabilities(&self, question: &[String]) -> Vec<F> {
        self.token_log_probs(question).into_iter().map(|x| x.exp()).collect()
    }
}

/// Trains on the questions of `train` and records perplexity on `dev`.
pub fn train_lm<F: Scalar>(train: &[Example], dev: &[Example], config: &LmConfig) -> Result<LanguageModel<F>> {
    if train.is_empty() {
        return Err(Error::invalid("language model training corpus is empty"));
    }
    let vocab = vocab_from_sequences(
        train.iter().map(|e| e.question.as_slice()),
        config.max_vocab,
        config.min_freq,
    );
    let mut lm = LanguageModel::new(config.clone(), vocab, config.train.seed)?;
    let questions: Vec<&[String]> = train.iter().map(|e| e.question.as_slice()).collect();
    let mut params = lm.params.clone();
    fit(&mut params, &questions, &config.train, |p, q| lm.training_loss(p, q))?;
    lm.params = params;
    if !dev.is_empty() {
        lm.dev_perplexity = Some(lm.perplexity(dev.iter().map(|e| e.question.as_slice())));
    }
    Ok(lm)
}
