//! Model-agnostic decoding: beam search, greedy decoding and ancestral
//! sampling over anything implementing [`SequenceModel`].

use rand::Rng;

use crate::Scalar;

/// An autoregressive model over token ids.
pub trait SequenceModel<F: Scalar> {
    type State: Clone;

    fn eos(&self) -> usize;

    fn initial(&self) -> Self::State;

    /// Log-probabilities of the next token, plus the state every
    /// continuation shares before [`with_token`](Self::with_token) is applied.
    fn step(&self, state: &Self::State) -> (Vec<F>, Self::State);

    fn with_token(&self, state: Self::State, token: usize) -> Self::State;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis<F> {
    pub tokens: Vec<usize>,
    pub log_prob: F,
}

impl<F: Scalar> Hypothesis<F> {
    /// Log-probability divided by length.
    pub fn score(&self) -> F {
        self.log_prob / F::from_usize(self.tokens.len().max(1)).unwrap()
    }
}

struct Beam<S, F> {
    state: S,
    tokens: Vec<usize>,
    log_prob: F,
}

/// Beam search with length-normalized final ranking.
///
/// At every step the `beam_size` best expansions by cumulative
/// log-probability are kept; expansions ending in EOS, or reaching
/// `max_len`, are set aside as finished. The finished hypothesis with the
/// best `log_prob / len` is returned. `beam_size == 1` is greedy decoding.
pub fn beam_search<F: Scalar, M: SequenceModel<F>>(
    model: &M,
    beam_size: usize,
    max_len: usize,
) -> Hypothesis<F> {
    assert!(beam_size >= 1, "beam size must be at least 1");
    assert!(max_len >= 1, "max_len must be at least 1");
    let eos = model.eos();
    let mut active = vec![Beam {
        state: model.initial(),
        tokens: Vec::new(),
        log_prob: F::zero(),
    }];
    let mut finished: Vec<Hypothesis<F>> = Vec::new();
    for t in 1..=max_len {
        let mut posts = Vec::with_capacity(active.len());
        let mut candidates: Vec<(usize, usize, F)> = Vec::new();
        for (b, beam) in active.iter().enumerate() {
            let (lp, post) = model.step(&beam.state);
            for (k, &l) in lp.iter().enumerate() {
                if l.is_finite() {
                    candidates.push((b, k, beam.log_prob + l));
                }
            }
            posts.push(post);
        }
        candidates.sort_by(|x, y| {
            y.2.partial_cmp(&x.2)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(x.0.cmp(&y.0))
                .then(x.1.cmp(&y.1))
        });
        let mut next = Vec::new();
        for &(b, k, lp) in candidates.iter().take(beam_size) {
            let mut tokens = active[b].tokens.clone();
            tokens.push(k);
            if k == eos || t == max_len {
                finished.push(Hypothesis {
                    tokens,
                    log_prob: lp,
                });
            } else {
                next.push(Beam {
                    state: model.with_token(posts[b].clone(), k),
                    tokens,
                    log_prob: lp,
                });
            }
        }
        active = next;
        if active.is_empty() {
            break;
        }
    }
    let mut best = finished.swap_remove(0);
    for h in finished {
        if h.score() > best.score() {
            best = h;
        }
    }
    best
}

pub fn greedy_decode<F: Scalar, M: SequenceModel<F>>(model: &M, max_len: usize) -> Hypothesis<F> {
    beam_search(model, 1, max_len)
}

/// Draws each token from the model's next-token distribution until EOS
/// or `max_len`. Returns the tokens and the log-probability of each draw.
pub fn sample<F: Scalar, M: SequenceModel<F>, R: Rng>(
    model: &M,
    max_len: usize,
    rng: &mut R,
) -> (Vec<usize>, Vec<F>) {
    assert!(max_len >= 1, "max_len must be at least 1");
    let eos = model.eos();
    let mut state = model.initial();
    let mut tokens = Vec::new();
    let mut log_probs = Vec::new();
    for _ in 0..max_len {
        let (lp, post) = model.step(&state);
        let k = draw(&lp, rng);
        tokens.push(k);
        log_probs.push(lp[k]);
        if k == eos {
            break;
        }
        state = model.with_token(post, k);
    }
    (tokens, log_probs)
}

/// Inverse-CDF draw from log-probabilities.
pub fn draw<F: Scalar, R: Rng>(log_probs: &[F], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    let mut last = 0;
    for (k, &l) in log_probs.iter().enumerate() {
        let p = l.f64().exp();
        if p <= 0.0 {
            continue;
        }
        last = k;
        cum += p;
        if u < cum {
            return k;
        }
    }
    last
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// A table-driven model: next-token probabilities depend on the prefix.
    pub(crate) struct TableModel {
        pub vocab: usize,
        pub eos: usize,
        pub probs: Box<dyn Fn(&[usize]) -> Vec<f64>>,
    }

    impl SequenceModel<f64> for TableModel {
        type State = Vec<usize>;

        fn eos(&self) -> usize {
            self.eos
        }

        fn initial(&self) -> Vec<usize> {
            Vec::new()
        }

        fn step(&self, state: &Vec<usize>) -> (Vec<f64>, Vec<usize>) {
            let p = (self.probs)(state);
            assert_eq!(p.len(), self.vocab);
            (p.iter().map(|x| x.ln()).collect(), state.clone())
        }

        fn with_token(&self, mut state: Vec<usize>, token: usize) -> Vec<usize> {
            state.push(token);
            state
        }
    }

    fn point_mass(seq: Vec<usize>) -> TableModel {
        TableModel {
            vocab: 4,
            eos: 3,
            probs: Box::new(move |prefix| {
                let mut p = vec![0.0; 4];
                p[*seq.get(prefix.len()).unwrap_or(&3)] = 1.0;
                p
            }),
        }
    }

    #[test]
    fn beam_one_on_point_mass_follows_it() {
        let m = point_mass(vec![1, 0, 2, 3]);
        let h = beam_search(&m, 1, 10);
        assert_eq!(h.tokens, vec![1, 0, 2, 3]);
        assert_eq!(h.log_prob, 0.0);
    }

    #[test]
    fn sampling_a_point_mass_equals_greedy() {
        let m = point_mass(vec![2, 2, 0, 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (toks, lps) = sample(&m, 10, &mut rng);
        assert_eq!(toks, greedy_decode(&m, 10).tokens);
        assert!(lps.iter().all(|&l| l == 0.0));
    }

    /// Three tokens, token 2 is EOS, at most two steps.
    pub(crate) fn random_toy(seed: u64) -> TableModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut table: Vec<Vec<f64>> = Vec::new();
        for _ in 0..4 {
            let raw: Vec<f64> = (0..3).map(|_| rng.gen_range(0.05..1.0)).collect();
            let s: f64 = raw.iter().sum();
            table.push(raw.into_iter().map(|x| x / s).collect());
        }
        TableModel {
            vocab: 3,
            eos: 2,
            probs: Box::new(move |prefix| match prefix {
                [] => table[0].clone(),
                [a] => table[1 + a].clone(),
                _ => unreachable!(),
            }),
        }
    }

    /// Every complete sequence of the toy model with its normalized score.
    pub(crate) fn enumerate_toy(m: &TableModel) -> Vec<(Vec<usize>, f64)> {
        let mut out = Vec::new();
        let p0 = (m.probs)(&[]);
        for a in 0..3 {
            if a == m.eos {
                out.push((vec![a], p0[a].ln()));
                continue;
            }
            let p1 = (m.probs)(&[a]);
            for b in 0..3 {
                out.push((vec![a, b], (p0[a].ln() + p1[b].ln()) / 2.0));
            }
        }
        out
    }

    #[test]
    fn exhaustive_beam_finds_true_argmax() {
        for seed in 0..200 {
            let m = random_toy(seed);
            let all = enumerate_toy(&m);
            let best = all
                .iter()
                .cloned()
                .fold((vec![], f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
            let h = beam_search(&m, 9, 2);
            assert_eq!(h.tokens, best.0, "seed {seed}");
            assert!((h.score() - best.1).abs() < 1e-12);
        }
    }

    #[test]
    fn exhaustive_width_dominates_every_narrower_beam() {
        for seed in 0..200 {
            let m = random_toy(seed);
            let full = beam_search(&m, 9, 2).score();
            for b in 1..9 {
                assert!(beam_search(&m, b, 2).score() <= full + 1e-12);
            }
        }
    }

    #[test]
    fn empirical_draw_frequencies_match() {
        let lp = [0.2f64.ln(), 0.5f64.ln(), 0.3f64.ln()];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[draw(&lp, &mut rng)] += 1;
        }
        for (k, &c) in counts.iter().enumerate() {
            let p = lp[k].exp();
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!((c as f64 / n as f64 - p).abs() < 3.0 * sigma, "{counts:?}");
        }
    }
}
