//! Sequence-to-sequence question generator with additive attention, a
//! pointer-generator copy mechanism and coverage.
//!
//! The encoder is a one-layer bidirectional GRU over the (truncated)
//! document. Each decoder step runs a one-layer GRU on the previous token,
//! attends over the encoder states with coverage-aware additive attention
//! and mixes a vocabulary softmax with the attention-derived copy
//! distribution:
//!
//! `P(w) = p_gen * P_vocab(w) + (1 - p_gen) * sum_{i : doc_i = w} a_i`.
//!
//! Distributions live over the extended vocabulary: the fixed vocabulary
//! followed by document tokens that are not in it.

pub mod decode;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::corpus::{truncate_document, Example, Vocabulary, BOS, EOS, UNK};
use crate::error::{Error, Result};
use crate::nn::{Gradients, Graph, Gru, Linear, NodeId, ParamId, ParamStore};
use crate::Scalar;

pub use decode::{beam_search, greedy_decode, sample, Hypothesis, SequenceModel};

pub const CHECKPOINT_KIND: &str = "generator";

/// Floor applied to probabilities before taking logs.
const PROB_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub hidden_size: usize,
    pub embedding_size: usize,
    pub max_decode_len: usize,
    pub coverage_weight: f64,
    pub beam_size: usize,
    /// Vocabulary size bound, reserved tokens included.
    pub max_vocab: usize,
    pub min_freq: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            hidden_size: 512,
            embedding_size: 300,
            max_decode_len: 32,
            coverage_weight: 0.25,
            beam_size: 5,
            max_vocab: 45_000,
            min_freq: 1,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0
            || self.embedding_size == 0
            || self.max_decode_len == 0
            || self.beam_size == 0
        {
            return Err(Error::Config("generator sizes must be positive".into()));
        }
        if !(self.coverage_weight >= 0.0) {
            return Err(Error::Config("coverage_weight must be >= 0".into()));
        }
        Ok(())
    }
}

/// Maps document positions into the extended vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceMap {
    /// Extended id of each document position.
    pub ext_ids: Vec<usize>,
    /// Document tokens outside the vocabulary, in first-occurrence order;
    /// `oov[k]` has extended id `vocab_len + k`.
    pub oov: Vec<String>,
    pub vocab_len: usize,
}

impl SourceMap {
    pub fn new(vocab: &Vocabulary, document: &[String]) -> Self {
        let mut oov: Vec<String> = Vec::new();
        let ext_ids = document
            .iter()
            .map(|t| match vocab.get(t) {
                Some(i) => i,
                None => match oov.iter().position(|o| o == t) {
                    Some(k) => vocab.len() + k,
                    None => {
                        oov.push(t.clone());
                        vocab.len() + oov.len() - 1
                    }
                },
            })
            .collect();
        SourceMap {
            ext_ids,
            oov,
            vocab_len: vocab.len(),
        }
    }

    pub fn extended_len(&self) -> usize {
        self.vocab_len + self.oov.len()
    }

    /// Extended id for a target token; tokens neither in the vocabulary nor
    /// in the document map to UNK.
    pub fn target_id(&self, vocab: &Vocabulary, token: &str) -> usize {
        vocab
            .get(token)
            .or_else(|| {
                self.oov
                    .iter()
                    .position(|o| o == token)
                    .map(|k| self.vocab_len + k)
            })
            .unwrap_or(UNK)
    }

    /// Embedding row for an extended id (document-only tokens read as UNK).
    pub fn input_id(&self, ext: usize) -> usize {
        if ext < self.vocab_len {
            ext
        } else {
            UNK
        }
    }

    pub fn token<'a>(&'a self, vocab: &'a Vocabulary, ext: usize) -> &'a str {
        if ext < self.vocab_len {
            vocab.token(ext)
        } else {
            &self.oov[ext - self.vocab_len]
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Layers {
    emb: ParamId,
    enc_fwd: Gru,
    enc_bwd: Gru,
    bridge: Linear,
    dec: Gru,
    att_key: ParamId,
    att_query: Linear,
    att_cov: ParamId,
    att_v: ParamId,
    out: Linear,
    pgen: Linear,
}

/// Encoder output as plain values, reusable across decoding steps.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDocument<F> {
    /// One `2h` state per (truncated) document token: forward ‖ backward.
    pub states: Vec<Vec<F>>,
    keys: Vec<Vec<F>>,
    /// Initial decoder state.
    pub init_state: Vec<F>,
    pub source: SourceMap,
}

/// One decoder step's outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderStep<F> {
    /// Distribution over the extended vocabulary.
    pub distribution: Vec<F>,
    pub attention: Vec<F>,
    /// Coverage before this step (`c^t`).
    pub coverage: Vec<F>,
    /// Coverage after this step (`c^{t+1} = c^t + a^t`).
    pub next_coverage: Vec<F>,
    pub p_gen: F,
    pub state: Vec<F>,
}

/// A sampled question with the log-probability of every draw.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSequence<F> {
    /// Extended ids, ending in EOS unless the length limit was hit.
    pub ids: Vec<usize>,
    pub tokens: Vec<String>,
    pub log_probs: Vec<F>,
}

impl<F: Scalar> SampledSequence<F> {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Tokens with a trailing EOS removed.
    pub fn question(&self) -> &[String] {
        match self.ids.last() {
            Some(&EOS) => &self.tokens[..self.tokens.len() - 1],
            _ => &self.tokens,
        }
    }

    pub fn mean_log_prob(&self) -> F {
        self.log_probs.iter().copied().sum::<F>() / F::from_usize(self.len().max(1)).unwrap()
    }
}

pub(crate) struct EncNodes {
    states: Vec<NodeId>,
    keys: Vec<NodeId>,
    init: NodeId,
    pub(crate) source: SourceMap,
}

pub(crate) struct StepNodes {
    pub dist: NodeId,
    pub attn: NodeId,
    pub p_gen: NodeId,
    pub state: NodeId,
    pub next_coverage: NodeId,
}

/// Per-token loss terms of one teacher-forced pass.
pub(crate) struct ForcedPass {
    pub log_probs: Vec<NodeId>,
    pub coverage_terms: Vec<NodeId>,
}

#[derive(Debug, Clone)]
pub struct Generator<F> {
    config: GeneratorConfig,
    vocab: Vocabulary,
    params: ParamStore<F>,
    layers: Layers,
}

impl<F: Scalar> Generator<F> {
    pub fn new(config: GeneratorConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, d, v) = (config.hidden_size, config.embedding_size, vocab.len());
        let mut p = ParamStore::new();
        let layers = Layers {
            emb: p.add_uniform("emb", v, d, 0.1, &mut rng),
            enc_fwd: Gru::new(&mut p, "enc_fwd", d, h, &mut rng),
            enc_bwd: Gru::new(&mut p, "enc_bwd", d, h, &mut rng),
            bridge: Linear::new(&mut p, "bridge", 2 * h, h, &mut rng),
            dec: Gru::new(&mut p, "dec", d, h, &mut rng),
            att_key: p.add_uniform("att.key", h, 2 * h, (3.0 / h as f64).sqrt(), &mut rng),
            att_query: Linear::new(&mut p, "att.query", h, h, &mut rng),
            att_cov: p.add_uniform("att.cov", h, 1, 0.1, &mut rng),
            att_v: p.add_uniform("att.v", h, 1, (3.0 / h as f64).sqrt(), &mut rng),
            out: Linear::new(&mut p, "out", 3 * h, v, &mut rng),
            pgen: Linear::new(&mut p, "pgen", 3 * h + d, 1, &mut rng),
        };
        Ok(Generator {
            config,
            vocab,
            params: p,
            layers,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn set_coverage_weight(&mut self, weight: f64) {
        self.config.coverage_weight = weight;
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn params(&self) -> &ParamStore<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<F> {
        &mut self.params
    }

    pub fn set_params(&mut self, params: ParamStore<F>) {
        assert!(self.params.same_layout(&params), "parameter layout mismatch");
        self.params = params;
    }

    pub fn source_map(&self, document: &[String]) -> SourceMap {
        SourceMap::new(&self.vocab, truncate_document(document))
    }

    pub(crate) fn encode_on(&self, g: &mut Graph<'_, F>, document: &[String]) -> EncNodes {
        let doc = truncate_document(document);
        assert!(!doc.is_empty(), "cannot encode an empty document");
        let source = SourceMap::new(&self.vocab, doc);
        let l = &self.layers;
        let xs: Vec<NodeId> = source
            .ext_ids
            .iter()
            .map(|&e| g.embed(l.emb, source.input_id(e)))
            .collect();
        let fwd = l.enc_fwd.run(g, &xs);
        let rev: Vec<NodeId> = xs.iter().rev().copied().collect();
        let mut bwd = l.enc_bwd.run(g, &rev);
        bwd.reverse();
        let states: Vec<NodeId> = fwd
            .iter()
            .zip(&bwd)
            .map(|(&f, &b)| g.concat(&[f, b]))
            .collect();
        let keys = states.iter().map(|&s| g.matvec(l.att_key, s)).collect();
        let summary = g.concat(&[fwd[fwd.len() - 1], bwd[0]]);
        let init = l.bridge.forward(g, summary);
        let init = g.tanh(init);
        EncNodes {
            states,
            keys,
            init,
            source,
        }
    }

    pub(crate) fn initial_coverage(&self, g: &mut Graph<'_, F>, enc: &EncNodes) -> NodeId {
        g.zeros(enc.states.len())
    }

    pub(crate) fn init_state(&self, enc: &EncNodes) -> NodeId {
        enc.init
    }

    pub(crate) fn step_on(
        &self,
        g: &mut Graph<'_, F>,
        enc: &EncNodes,
        prev_ext: usize,
        state: NodeId,
        coverage: NodeId,
        pgen_override: Option<F>,
    ) -> StepNodes {
        let l = &self.layers;
        let x = g.embed(l.emb, enc.source.input_id(prev_ext));
        let s = l.dec.step(g, x, state);
        let q = l.att_query.forward(g, s);
        let e = g.attn_scores(&enc.keys, q, coverage, l.att_cov, l.att_v);
        let a = g.softmax(e);
        let ctx = g.weighted_sum(a, &enc.states);
        let sc = g.concat(&[s, ctx]);
        let logits = l.out.forward(g, sc);
        let pv = g.softmax(logits);
        let p_gen = match pgen_override {
            Some(p) => g.constant(p),
            None => {
                let feats = g.concat(&[ctx, s, x]);
                let z = l.pgen.forward(g, feats);
                g.sigmoid(z)
            }
        };
        let ext = enc.source.extended_len();
        let padded = g.pad_zeros(pv, ext);
        let gen = g.scale_by(padded, p_gen);
        let copy = g.scatter_add(a, &enc.source.ext_ids, ext);
        let p_copy = g.one_minus(p_gen);
        let copy = g.scale_by(copy, p_copy);
        let dist = g.add(gen, copy);
        let next_coverage = g.add(coverage, a);
        StepNodes {
            dist,
            attn: a,
            p_gen,
            state: s,
            next_coverage,
        }
    }

    /// Teacher-forced pass over `targets` (extended ids). Coverage terms are
    /// only built when `with_coverage` is set.
    pub(crate) fn force_on(
        &self,
        g: &mut Graph<'_, F>,
        enc: &EncNodes,
        targets: &[usize],
        with_coverage: bool,
    ) -> ForcedPass {
        let mut state = self.init_state(enc);
        let mut coverage = self.initial_coverage(g, enc);
        let mut prev = BOS;
        let floor = F::of(PROB_FLOOR);
        let mut log_probs = Vec::with_capacity(targets.len());
        let mut coverage_terms = Vec::new();
        for &y in targets {
            let st = self.step_on(g, enc, prev, state, coverage, None);
            let p = g.pick(st.dist, y);
            log_probs.push(g.log(p, floor));
            if with_coverage {
                let m = g.min(st.attn, coverage);
                coverage_terms.push(g.sum(m));
            }
            state = st.state;
            coverage = st.next_coverage;
            prev = y;
        }
        ForcedPass {
            log_probs,
            coverage_terms,
        }
    }

    /// Gold question plus EOS as extended ids.
    pub fn targets(&self, source: &SourceMap, question: &[String]) -> Vec<usize> {
        question
            .iter()
            .map(|t| source.target_id(&self.vocab, t))
            .chain(std::iter::once(EOS))
            .collect()
    }

    /// Builds the base loss
    /// `(1/T) sum_t [-log P(y_t) + coverage_weight * sum_i min(a_i^t, c_i^t)]`
    /// on `g` and returns its node.
    pub(crate) fn mle_loss_on(
        &self,
        g: &mut Graph<'_, F>,
        enc: &EncNodes,
        question: &[String],
        coverage_weight: f64,
    ) -> NodeId {
        let targets = self.targets(&enc.source, question);
        let gamma = F::of(coverage_weight);
        let pass = self.force_on(g, enc, &targets, gamma > F::zero());
        let mut terms = Vec::with_capacity(targets.len());
        for (t, &lp) in pass.log_probs.iter().enumerate() {
            let nll = g.scale(lp, -F::one());
            let term = if gamma > F::zero() {
                let c = g.scale(pass.coverage_terms[t], gamma);
                g.add(nll, c)
            } else {
                nll
            };
            terms.push(term);
        }
        let stacked = g.concat(&terms);
        let total = g.sum(stacked);
        g.scale(total, F::one() / F::from_usize(targets.len()).unwrap())
    }

    pub fn mle_loss(&self, example: &Example) -> F {
        let mut g = Graph::new(&self.params);
        let enc = self.encode_on(&mut g, &example.document);
        let l = self.mle_loss_on(&mut g, &enc, &example.question, self.config.coverage_weight);
        g.scalar(l)
    }

    pub fn mle_loss_and_grad(&self, example: &Example) -> (F, Gradients<F>) {
        let mut g = Graph::new(&self.params);
        let enc = self.encode_on(&mut g, &example.document);
        let l = self.mle_loss_on(&mut g, &enc, &example.question, self.config.coverage_weight);
        let mut grads = self.params.zero_grads();
        g.backward(l, F::one(), &mut grads);
        (g.scalar(l), grads)
    }

    /// Sum of gold-token negative log-likelihoods (EOS included) and the
    /// number of scored tokens.
    pub fn question_nll(&self, example: &Example) -> (F, usize) {
        let mut g = Graph::new(&self.params);
        let enc = self.encode_on(&mut g, &example.document);
        let targets = self.targets(&enc.source, &example.question);
        let pass = self.force_on(&mut g, &enc, &targets, false);
        let nll = pass.log_probs.iter().map(|&n| -g.scalar(n)).sum();
        (nll, targets.len())
    }

    pub fn encode(&self, document: &[String]) -> EncodedDocument<F> {
        let mut g = Graph::new(&self.params);
        let enc = self.encode_on(&mut g, document);
        self.snapshot(&g, &enc)
    }

    /// Values of on-graph encoder nodes.
    pub(crate) fn snapshot(&self, g: &Graph<'_, F>, enc: &EncNodes) -> EncodedDocument<F> {
        EncodedDocument {
            states: enc.states.iter().map(|&s| g.value(s).to_vec()).collect(),
            keys: enc.keys.iter().map(|&s| g.value(s).to_vec()).collect(),
            init_state: g.value(enc.init).to_vec(),
            source: enc.source.clone(),
        }
    }

    fn nodes_for(&self, g: &mut Graph<'_, F>, enc: &EncodedDocument<F>) -> EncNodes {
        EncNodes {
            states: enc.states.iter().map(|s| g.input(s.clone())).collect(),
            keys: enc.keys.iter().map(|s| g.input(s.clone())).collect(),
            init: g.input(enc.init_state.clone()),
            source: enc.source.clone(),
        }
    }

    /// One decoder step from explicit state. `p_gen_override` replaces the
    /// learned copy gate when set.
    pub fn decode_step(
        &self,
        enc: &EncodedDocument<F>,
        prev_ext: usize,
        state: &[F],
        coverage: &[F],
        p_gen_override: Option<F>,
    ) -> DecoderStep<F> {
        assert_eq!(coverage.len(), enc.states.len(), "coverage length must match the document");
        let mut g = Graph::new(&self.params);
        let nodes = self.nodes_for(&mut g, enc);
        let s = g.input(state.to_vec());
        let c = g.input(coverage.to_vec());
        let st = self.step_on(&mut g, &nodes, prev_ext, s, c, p_gen_override);
        DecoderStep {
            distribution: g.value(st.dist).to_vec(),
            attention: g.value(st.attn).to_vec(),
            coverage: coverage.to_vec(),
            next_coverage: g.value(st.next_coverage).to_vec(),
            p_gen: g.scalar(st.p_gen),
            state: g.value(st.state).to_vec(),
        }
    }

    /// A [`SequenceModel`] view of the generator for one document.
    pub fn decoder<'a>(&'a self, enc: &'a EncodedDocument<F>) -> DocumentDecoder<'a, F> {
        DocumentDecoder { gen: self, enc }
    }

    fn to_sampled(&self, source: &SourceMap, ids: Vec<usize>, log_probs: Vec<F>) -> SampledSequence<F> {
        let tokens = ids
            .iter()
            .map(|&i| source.token(&self.vocab, i).to_string())
            .collect();
        SampledSequence {
            ids,
            tokens,
            log_probs,
        }
    }

    /// Samples from an already encoded document.
    pub fn sample_encoded<R: Rng>(
        &self,
        enc: &EncodedDocument<F>,
        max_len: usize,
        rng: &mut R,
    ) -> SampledSequence<F> {
        let (ids, lps) = sample(&self.decoder(enc), max_len, rng);
        self.to_sampled(&enc.source, ids, lps)
    }

    /// Beam search from an already encoded document; tokens exclude EOS.
    pub fn beam_encoded(&self, enc: &EncodedDocument<F>, beam_size: usize, max_len: usize) -> Vec<String> {
        let h = beam_search(&self.decoder(enc), beam_size, max_len);
        self.to_sampled(&enc.source, h.tokens, Vec::new()).question().to_vec()
    }

    pub fn sample_sequence<R: Rng>(
        &self,
        document: &[String],
        max_len: usize,
        rng: &mut R,
    ) -> SampledSequence<F> {
        self.sample_encoded(&self.encode(document), max_len, rng)
    }

    pub fn sample_with_seed(&self, document: &[String], max_len: usize, seed: u64) -> SampledSequence<F> {
        self.sample_sequence(document, max_len, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Beam search; the returned tokens exclude EOS.
    pub fn beam_search(&self, document: &[String], beam_size: usize, max_len: usize) -> Vec<String> {
        self.beam_encoded(&self.encode(document), beam_size, max_len)
    }

    pub fn greedy(&self, document: &[String], max_len: usize) -> Vec<String> {
        self.beam_search(document, 1, max_len)
    }

    /// Decodes with the configured beam size and length limit.
    pub fn generate(&self, document: &[String]) -> Vec<String> {
        self.beam_search(document, self.config.beam_size, self.config.max_decode_len)
    }

    /// Beam search over many documents, in parallel.
    pub fn generate_all(&self, documents: &[Vec<String>], beam_size: usize, max_len: usize) -> Vec<Vec<String>> {
        documents.par_iter().map(|d| self.beam_search(d, beam_size, max_len)).collect()
    }

    /// `exp(sum NLL / sum T)` over gold questions, end marker included.
    pub fn perplexity(&self, examples: &[Example]) -> f64 {
        let parts: Vec<(f64, usize)> = examples
            .par_iter()
            .map(|ex| {
                let (nll, t) = self.question_nll(ex);
                (nll.f64(), t)
            })
            .collect();
        let nll: f64 = parts.iter().map(|p| p.0).sum();
        let t: usize = parts.iter().map(|p| p.1).sum();
        if t == 0 {
            return f64::NAN;
        }
        (nll / t as f64).exp()
    }

    /// Teacher-forced log-probabilities of a given id sequence.
    pub fn sequence_log_probs(&self, document: &[String], ids: &[usize]) -> Vec<F> {
        let mut g = Graph::new(&self.params);
        let enc = self.encode_on(&mut g, document);
        let pass = self.force_on(&mut g, &enc, ids, false);
        pass.log_probs.iter().map(|&n| g.scalar(n)).collect()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(CHECKPOINT_KIND, &self.config, &self.vocab, &self.params)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let config: GeneratorConfig = ckpt.config()?;
        let mut g = Generator::new(config, ckpt.vocab.clone(), 0)?;
        ckpt.restore(&mut g.params)?;
        Ok(g)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>, expected_vocab: Option<&Vocabulary>) -> Result<Self> {
        let ckpt = Checkpoint::load(path.as_ref(), CHECKPOINT_KIND, expected_vocab)?;
        Self::from_checkpoint(&ckpt).map_err(|e| Error::Checkpoint {
            path: path.as_ref().to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Decoder state: previous token, recurrent state and coverage.
#[derive(Debug, Clone)]
pub struct DecodeState<F> {
    prev: usize,
    state: Vec<F>,
    coverage: Vec<F>,
}

pub struct DocumentDecoder<'a, F> {
    gen: &'a Generator<F>,
    enc: &'a EncodedDocument<F>,
}

impl<'a, F: Scalar> SequenceModel<F> for DocumentDecoder<'a, F> {
    type State = DecodeState<F>;

    fn eos(&self) -> usize {
        EOS
    }

    fn initial(&self) -> DecodeState<F> {
        DecodeState {
            prev: BOS,
            state: self.enc.init_state.clone(),
            coverage: vec![F::zero(); self.enc.states.len()],
        }
    }

    fn step(&self, s: &DecodeState<F>) -> (Vec<F>, DecodeState<F>) {
        let st = self.gen.decode_step(self.enc, s.prev, &s.state, &s.coverage, None);
        let floor = F::of(PROB_FLOOR);
        let lp = st.distribution.iter().map(|&p| p.max(floor).ln()).collect();
        (
            lp,
            DecodeState {
                prev: s.prev,
                state: st.state,
                coverage: st.next_coverage,
            },
        )
    }

    fn with_token(&self, mut state: DecodeState<F>, token: usize) -> DecodeState<F> {
        state.prev = token;
        state
    }
}
