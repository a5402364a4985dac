//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Criteria 7 and 9 run the full desk pipeline twice on the synthetic
//! corpus; `cargo test --release --test acceptance` keeps that under two
//! minutes on one core.

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qgrl_core::analysis::{pearson_matrix, reward_rating_distribution, RatingScale};
use qgrl_core::corpus::{Example, Vocabulary, BOS};
use qgrl_core::generator::{beam_search, Generator, GeneratorConfig, SequenceModel};
use qgrl_core::metrics::{bleu, bleu_stats, lcs_len, meteor_alignment, meteor_exact, meteor_pair, rouge_l, rouge_l_pair};
use qgrl_core::nn::check_gradients;
use qgrl_core::oracles::negatives::{
    entity_inventory, make_inter_doc_entity_swap, make_intra_doc_entity_swap, make_negatives, make_question_swap,
    NegativeKind,
};
use qgrl_core::oracles::{
    answerability_reward, best_span, fluency_reward, focal_loss, relevance_reward, RelevanceScorer, RewardConfig,
    RewardValues, SpanScorer, TokenScorer,
};
use qgrl_core::synthetic::{self, SyntheticConfig};
use qgrl_core::trainer::{example_loss, joint_loss, rl_loss, BaselineConfig, LossWeights, ScoredSample};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_secs: u64, what: &str) -> Result<(), String> {
    ensure(elapsed.as_secs() < limit_secs, || format!("{what} took {elapsed:?}, limit {limit_secs}s"))
}

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

fn random_distribution(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>().powi(3) + 1e-6).collect();
    let z: f64 = raw.iter().sum();
    raw.iter().map(|x| x / z).collect()
}

struct Probs(Vec<f64>);

impl TokenScorer<f64> for Probs {
    fn token_probabilities(&self, _: &[String]) -> Vec<f64> {
        self.0.clone()
    }
}

struct Relevance(f64);

impl RelevanceScorer<f64> for Relevance {
    fn relevance(&self, _: &[String], _: &[String]) -> f64 {
        self.0
    }
}

struct Spans(Vec<f64>, Vec<f64>);

impl SpanScorer<f64> for Spans {
    fn span_distributions(&self, _: &[String], _: &[String]) -> (Vec<f64>, Vec<f64>) {
        (self.0.clone(), self.1.clone())
    }
}

fn brute_force_span(s: &[f64], e: &[f64], l: usize) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for i in 0..s.len() {
        for j in i..s.len() {
            if j - i <= l {
                best = best.max((s[i] * e[j]).sqrt());
            }
        }
    }
    best
}

fn reward_oracles() -> Outcome {
    let t0 = Instant::now();
    let cfg = RewardConfig::default();
    let eps = cfg.epsilon;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for case in 0..200 {
        // Fluency: minus the inverse geometric mean of token probabilities.
        let t = rng.gen_range(1..20);
        let probs: Vec<f64> = (0..t).map(|_| rng.gen_range(1e-3..1.0)).collect();
        let q: Vec<String> = (0..t).map(|i| format!("w{i}")).collect();
        let got = fluency_reward(&q, &Probs(probs.clone()), &cfg).map_err(|e| e.to_string())?;
        let want = -probs.iter().product::<f64>().powf(-1.0 / t as f64);
        worst = worst.max((got - want).abs());
        ensure((got - want).abs() <= 1e-9, || format!("fluency case {case}: {got} vs {want}"))?;

        let p: f64 = rng.gen();
        let got = relevance_reward(&q, &q, &Relevance(p), &cfg).map_err(|e| e.to_string())?;
        let want = -(1.0 - p + eps).ln();
        worst = worst.max((got - want).abs());
        ensure((got - want).abs() <= 1e-9, || format!("relevance case {case}: {got} vs {want}"))?;

        let n = rng.gen_range(1..60);
        let doc: Vec<String> = (0..n).map(|i| format!("d{i}")).collect();
        let s = random_distribution(&mut rng, n);
        let e = random_distribution(&mut rng, n);
        let l = rng.gen_range(0..40);
        let brute = brute_force_span(&s, &e, l);
        let (i, j, found) = best_span(&s, &e, l);
        ensure(found == brute && i <= j && j <= i + l, || {
            format!("span case {case}: ({i}, {j}, {found}) vs brute force {brute}")
        })?;
        let cfg_l = RewardConfig { max_answer_len: l.max(1), ..cfg };
        let got = answerability_reward(&doc, &q, &Spans(s.clone(), e.clone()), &cfg_l).map_err(|e| e.to_string())?;
        let want = -(1.0 - brute_force_span(&s, &e, l.max(1)) + eps).ln();
        worst = worst.max((got - want).abs());
        ensure((got - want).abs() <= 1e-9, || format!("answerability case {case}: {got} vs {want}"))?;

        let p: f64 = rng.gen_range(1e-6..1.0);
        let alpha: f64 = rng.gen_range(0.05..1.0);
        let lambda: f64 = rng.gen_range(0.0..5.0);
        let got = focal_loss(p, alpha, lambda, eps);
        let want = -alpha * (1.0 - p).powf(lambda) * p.ln();
        worst = worst.max((got - want).abs());
        ensure((got - want).abs() <= 1e-9, || format!("focal case {case}: {got} vs {want}"))?;
    }
    within(t0.elapsed(), 60, "reward oracles")?;
    Ok(format!("800 evaluations, max abs error {worst:.1e}, 200 span searches exact"))
}

fn tiny_generator(seed: u64) -> Generator<f64> {
    let vocab = Vocabulary::from_tokens(["who", "founded", "acme", "in", "?", "the", "city", "what"]);
    let cfg = GeneratorConfig {
        hidden_size: 5,
        embedding_size: 4,
        max_decode_len: 6,
        beam_size: 2,
        ..GeneratorConfig::default()
    };
    Generator::new(cfg, vocab, seed).expect("valid generator config")
}

fn example(doc: &str, q: &str) -> Example {
    Example {
        id: "x".into(),
        document: toks(doc),
        question: toks(q),
        answer_span: None,
        entities: Vec::new(),
    }
}

fn reduction_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let p: f64 = rng.gen_range(1e-6..1.0);
        let fl = focal_loss(p, 1.0, 0.0, 1e-12);
        ensure((fl + p.ln()).abs() <= 1e-9, || format!("focal(p={p}, 0, 1) = {fl}, cross-entropy {}", -p.ln()))?;

        let l_base: f64 = rng.gen_range(0.0..10.0);
        let rl = [Some(rng.gen_range(-5.0..5.0)), Some(rng.gen()), None];
        let zero = LossWeights { coverage: 0.25, fluency: 0.0, relevance: 0.0, answerability: 0.0 };
        ensure(joint_loss(l_base, rl, &zero) == l_base, || "joint_loss with zero weights differs from L_base".into())?;

        let lps: Vec<f64> = (0..rng.gen_range(1..10)).map(|_| -rng.gen_range(0.0..5.0)).collect();
        let r: f64 = rng.gen_range(-20.0..20.0);
        ensure(rl_loss(&lps, r, r) == 0.0, || format!("rl_loss at the baseline is {}", rl_loss(&lps, r, r)))?;
    }
    let g = tiny_generator(3);
    let ex = example("zed founded acme in the city", "who founded zed ?");
    let samples = [ScoredSample {
        ids: vec![4, 5, 3],
        rewards: RewardValues { values: [Some(-3.0), Some(1.2), Some(0.4)] },
    }];
    let zero = LossWeights { fluency: 0.0, relevance: 0.0, answerability: 0.0, ..LossWeights::default() };
    let out = example_loss(&g, g.params(), &ex, &samples, &BaselineConfig::default(), &zero);
    ensure(out.joint == out.l_base, || format!("generator joint {} vs L_base {}", out.joint, out.l_base))?;
    Ok("focal(lambda=0, alpha=1) = CE, joint(gamma=0) = L_base, rl(R=alpha) = 0".into())
}

fn gradient_checks() -> Outcome {
    let t0 = Instant::now();
    let g = tiny_generator(4);
    let n = g.params().num_scalars();
    ensure(n <= 5000, || format!("{n} parameters"))?;
    let ex = example("zed founded acme in the city", "who founded zed ?");
    let mle = check_gradients(g.params(), 1e-6, 1e-4, 1e-8, |p| {
        let mut h = g.clone();
        h.set_params(p.clone());
        h.mle_loss_and_grad(&ex)
    });
    let samples = [
        ScoredSample { ids: vec![4, 5, 3], rewards: RewardValues { values: [Some(-3.0), Some(0.4), Some(1.1)] } },
        ScoredSample { ids: vec![g.vocab().len(), 3], rewards: RewardValues { values: [None, Some(2.0), Some(0.1)] } },
    ];
    let joint = check_gradients(g.params(), 1e-6, 1e-4, 1e-8, |p| {
        let o = example_loss(&g, p, &ex, &samples, &BaselineConfig::default(), &LossWeights::default());
        (o.joint, o.grads)
    });
    for (name, r) in [("mle", &mle), ("joint", &joint)] {
        ensure(r.fraction_within() >= 0.95, || format!("{name}: {:.4} within 1e-4", r.fraction_within()))?;
    }
    within(t0.elapsed(), 300, "gradient checks")?;
    Ok(format!(
        "{n} parameters, within 1e-4: mle {:.2}%, joint {:.2}%",
        100.0 * mle.fraction_within(),
        100.0 * joint.fraction_within()
    ))
}

fn distribution_sanity() -> Outcome {
    let words = ["who", "founded", "acme", "in", "the", "city", "?", "zed", "yon", "qux"];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    let mut steps = 0;
    for seed in 0..20u64 {
        let g = tiny_generator(seed);
        let len = rng.gen_range(1..12);
        let doc: Vec<String> = (0..len).map(|_| words[rng.gen_range(0..words.len())].to_string()).collect();
        let enc = g.encode(&doc);
        let ext = enc.source.extended_len();
        let mut state = enc.init_state.clone();
        let mut cov = vec![0.0; enc.states.len()];
        let mut prev = BOS;
        for _ in 0..50 {
            let st = g.decode_step(&enc, prev, &state, &cov, None);
            let d: f64 = st.distribution.iter().sum();
            let a: f64 = st.attention.iter().sum();
            worst = worst.max((d - 1.0).abs()).max((a - 1.0).abs());
            ensure(st.coverage == cov, || format!("step {steps}: coverage input changed"))?;
            for i in 0..cov.len() {
                ensure(st.next_coverage[i] == cov[i] + st.attention[i], || {
                    format!("step {steps}: coverage recurrence broken at {i}")
                })?;
            }
            prev = rng.gen_range(0..ext);
            state = st.state;
            cov = st.next_coverage;
            steps += 1;
        }
    }
    ensure(worst <= 1e-6, || format!("max deviation from 1 is {worst:e}"))?;
    Ok(format!("{steps} decode steps, max |sum - 1| {worst:.1e}, coverage recurrence exact"))
}

fn contains(hay: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && hay.windows(needle.len()).any(|w| w == needle)
}

/// Checks a frequency table against a uniform distribution within 3 sigma.
fn uniform_within_3_sigma(counts: &BTreeMap<String, usize>, k: usize, n: usize, what: &str) -> Result<(), String> {
    ensure(counts.len() == k, || format!("{what}: {} distinct outcomes, expected {k}", counts.len()))?;
    let p = 1.0 / k as f64;
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    for (key, &c) in counts {
        let f = c as f64 / n as f64;
        ensure((f - p).abs() <= 3.0 * sigma, || format!("{what}: {key} drawn with frequency {f:.4}, expected {p:.4}"))?;
    }
    Ok(())
}

fn entity_example(doc: &str, entities: &[(usize, usize, &str)], q: &str) -> Example {
    use qgrl_core::corpus::EntitySpan;
    Example {
        id: "u".into(),
        document: toks(doc),
        question: toks(q),
        answer_span: None,
        entities: entities.iter().map(|&(start, end, l)| EntitySpan { start, end, label: l.into() }).collect(),
    }
}

fn negative_predicates() -> Outcome {
    let corpus = synthetic::generate(&SyntheticConfig::default()).map_err(|e| e.to_string())?;
    let examples = &corpus.train.examples;
    let set = make_negatives(examples, 7).map_err(|e| e.to_string())?;
    let by_id: BTreeMap<&str, &Example> = examples.iter().map(|e| (e.id.as_str(), e)).collect();
    let mut types: BTreeMap<Vec<String>, String> = BTreeMap::new();
    for ex in examples {
        for e in &ex.entities {
            types.insert(ex.entity_tokens(e).to_vec(), e.label.clone());
        }
    }
    let mut counts: BTreeMap<NegativeKind, usize> = BTreeMap::new();
    for neg in &set.negatives {
        let c = counts.entry(neg.kind).or_default();
        if *c == 1000 {
            continue;
        }
        *c += 1;
        let src_id = neg.example.id.rsplit_once('#').map(|p| p.0).ok_or("negative id without a source")?;
        let src = by_id.get(src_id).ok_or_else(|| format!("unknown source {src_id}"))?;
        ensure(neg.example.document == src.document, || format!("{}: document changed", neg.example.id))?;
        match neg.kind {
            NegativeKind::QuestionSwap => {
                let donor = neg.donor.as_deref().ok_or("question swap without donor")?;
                ensure(donor != src.id, || format!("{}: donor is the source", neg.example.id))?;
                ensure(by_id[donor].question == neg.example.question, || {
                    format!("{}: question is not the donor's", neg.example.id)
                })?;
            }
            NegativeKind::InterDocEntitySwap | NegativeKind::IntraDocEntitySwap => {
                let (from, to) = neg.replaced.as_ref().ok_or("entity swap without replacement")?;
                ensure(from != to && contains(&src.question, from) && contains(&src.document, from), || {
                    format!("{}: replaced entity not in the gold question and document", neg.example.id)
                })?;
                ensure(contains(&neg.example.question, to) && neg.example.question != src.question, || {
                    format!("{}: replacement missing from the question", neg.example.id)
                })?;
                if neg.kind == NegativeKind::InterDocEntitySwap {
                    ensure(!contains(&src.document, to), || format!("{}: inter entity in document", neg.example.id))?;
                    ensure(types.get(from) == types.get(to), || format!("{}: entity type changed", neg.example.id))?;
                } else {
                    ensure(contains(&src.document, to), || format!("{}: intra entity not in document", neg.example.id))?;
                }
            }
        }
    }
    for k in NegativeKind::ALL {
        ensure(counts.get(&k) == Some(&1000), || format!("only {:?} {k} negatives", counts.get(&k)))?;
    }

    // Uniformity of donors and replacements.
    let n = 20_000;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let five = &examples[..5];
    let mut donors = BTreeMap::new();
    for _ in 0..n {
        let neg = make_question_swap(five, 2, &mut rng).map_err(|e| e.to_string())?;
        *donors.entry(neg.donor.unwrap()).or_insert(0) += 1;
    }
    uniform_within_3_sigma(&donors, 4, n, "donor")?;

    let people = ["alice", "bob", "carol", "dave", "erin"];
    let pool: Vec<Example> = people
        .iter()
        .map(|p| entity_example(&format!("{p} was born in 1950 ."), &[(0, 0, "PER"), (4, 4, "DATE")], "x"))
        .collect();
    let inventory = entity_inventory(&pool);
    let inter = entity_example("alice was born in 1950 .", &[(0, 0, "PER"), (4, 4, "DATE")], "when was alice born ?");
    let mut repl = BTreeMap::new();
    for _ in 0..n {
        let neg = make_inter_doc_entity_swap(&inter, &inventory, &mut rng).ok_or("no inter swap")?;
        *repl.entry(neg.replaced.unwrap().1.join(" ")).or_insert(0) += 1;
    }
    uniform_within_3_sigma(&repl, 4, n, "inter replacement")?;

    let intra = entity_example(
        "alice met bob , carol and dave",
        &[(0, 0, "PER"), (2, 2, "PER"), (4, 4, "PER"), (6, 6, "PER")],
        "whom did alice meet ?",
    );
    let mut repl = BTreeMap::new();
    for _ in 0..n {
        let neg = make_intra_doc_entity_swap(&intra, &mut rng).ok_or("no intra swap")?;
        *repl.entry(neg.replaced.unwrap().1.join(" ")).or_insert(0) += 1;
    }
    uniform_within_3_sigma(&repl, 3, n, "intra replacement")?;
    Ok("3 x 1000 negatives, 0 violations; donor and replacement frequencies within 3 sigma".into())
}

fn brute_bleu_counts(h: &[String], r: &[String], n: usize) -> (usize, usize) {
    let grams = |t: &[String]| -> Vec<Vec<String>> {
        (0..t.len().saturating_sub(n - 1)).map(|i| t[i..i + n].to_vec()).collect()
    };
    let hg = grams(h);
    let rg = grams(r);
    let mut seen: Vec<&Vec<String>> = Vec::new();
    let mut matched = 0;
    for g in &hg {
        if seen.contains(&g) {
            continue;
        }
        seen.push(g);
        let ch = hg.iter().filter(|x| *x == g).count();
        let cr = rg.iter().filter(|x| *x == g).count();
        matched += ch.min(cr);
    }
    (matched, hg.len())
}

fn brute_lcs(a: &[String], b: &[String]) -> usize {
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let sub: Vec<&String> = (0..a.len()).filter(|i| mask & (1 << i) != 0).map(|i| &a[i]).collect();
        let mut it = b.iter();
        if sub.iter().all(|x| it.any(|y| y == *x)) {
            best = best.max(sub.len());
        }
    }
    best
}

/// Every one-to-one exact alignment, as (matches, chunks); keeps the best.
fn brute_alignment(h: &[String], r: &[String]) -> (usize, usize) {
    fn go(h: &[String], r: &[String], i: usize, used: &mut Vec<bool>, pairs: &mut Vec<(usize, usize)>, best: &mut (usize, usize)) {
        if i == h.len() {
            let m = pairs.len();
            let chunks = (0..m).filter(|&k| k == 0 || !(pairs[k - 1].0 + 1 == pairs[k].0 && pairs[k - 1].1 + 1 == pairs[k].1)).count();
            if m > best.0 || (m == best.0 && chunks < best.1) {
                *best = (m, chunks);
            }
            return;
        }
        go(h, r, i + 1, used, pairs, best);
        for j in 0..r.len() {
            if !used[j] && h[i] == r[j] {
                used[j] = true;
                pairs.push((i, j));
                go(h, r, i + 1, used, pairs, best);
                pairs.pop();
                used[j] = false;
            }
        }
    }
    let mut best = (0, 0);
    go(h, r, 0, &mut vec![false; r.len()], &mut Vec::new(), &mut best);
    best
}

struct Toy {
    table: Vec<Vec<f64>>,
}

impl SequenceModel<f64> for Toy {
    type State = Vec<usize>;

    fn eos(&self) -> usize {
        2
    }

    fn initial(&self) -> Vec<usize> {
        Vec::new()
    }

    fn step(&self, state: &Vec<usize>) -> (Vec<f64>, Vec<usize>) {
        let row = match state.as_slice() {
            [] => 0,
            [a] => 1 + a,
            _ => unreachable!("two steps at most"),
        };
        (self.table[row].iter().map(|p| p.ln()).collect(), state.clone())
    }

    fn with_token(&self, mut state: Vec<usize>, token: usize) -> Vec<usize> {
        state.push(token);
        state
    }
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let words = ["a", "b", "c", "d"];
    let sent = |rng: &mut ChaCha8Rng| -> Vec<String> {
        (0..rng.gen_range(1..=6)).map(|_| words[rng.gen_range(0..words.len())].to_string()).collect()
    };
    let mut hyps = Vec::new();
    let mut refs = Vec::new();
    for case in 0..50 {
        let h = sent(&mut rng);
        let r = sent(&mut rng);
        let stats = bleu_stats(&h, &r, 4);
        for n in 1..=4 {
            let (m, t) = brute_bleu_counts(&h, &r, n);
            ensure(stats[n - 1] == m as f64 && stats[4 + n - 1] == t as f64, || {
                format!("case {case}: {n}-gram counts {:?} vs ({m}, {t})", (stats[n - 1], stats[4 + n - 1]))
            })?;
        }
        let (m1, t1) = brute_bleu_counts(&h, &r, 1);
        let p1 = if m1 == 0 { 1e-9 } else { m1 as f64 / t1 as f64 };
        let bp = if h.len() > r.len() { 1.0 } else { (1.0 - r.len() as f64 / h.len() as f64).exp() };
        let b1 = bleu(&[h.clone()], &[r.clone()], 1).map_err(|e| e.to_string())?;
        ensure(b1 == p1 * bp, || format!("case {case}: BLEU1 {b1} vs {}", p1 * bp))?;

        let l = brute_lcs(&h, &r);
        ensure(lcs_len(&h, &r) == l, || format!("case {case}: LCS {} vs {l}", lcs_len(&h, &r)))?;
        let want = if l == 0 {
            0.0
        } else {
            let (p, rc) = (l as f64 / h.len() as f64, l as f64 / r.len() as f64);
            2.0 * p * rc / (p + rc)
        };
        ensure(rouge_l_pair(&h, &r) == want, || format!("case {case}: ROUGE-L {} vs {want}", rouge_l_pair(&h, &r)))?;

        let (m, chunks) = brute_alignment(&h, &r);
        let a = meteor_alignment(&h, &r);
        ensure(a.pairs.len() == m && a.chunks == chunks, || {
            format!("case {case}: alignment ({}, {}) vs ({m}, {chunks})", a.pairs.len(), a.chunks)
        })?;
        let want = if m == 0 {
            0.0
        } else {
            let (p, rc) = (m as f64 / h.len() as f64, m as f64 / r.len() as f64);
            let frag = if m > 1 { (chunks - 1) as f64 / (m - 1) as f64 } else { 0.0 };
            10.0 * p * rc / (rc + 9.0 * p) * (1.0 - 0.5 * frag.powi(3))
        };
        ensure(meteor_pair(&h, &r) == want, || format!("case {case}: METEOR {} vs {want}", meteor_pair(&h, &r)))?;
        hyps.push(h);
        refs.push(r);
    }
    let same = [
        bleu(&refs, &refs, 4).map_err(|e| e.to_string())?,
        bleu(&refs, &refs, 1).map_err(|e| e.to_string())?,
        rouge_l(&refs, &refs).map_err(|e| e.to_string())?,
        meteor_exact(&refs, &refs).map_err(|e| e.to_string())?,
    ];
    ensure(same.iter().all(|&s| s == 1.0), || format!("identical inputs scored {same:?}"))?;

    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let table: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let raw: Vec<f64> = (0..3).map(|_| rng.gen_range(0.05..1.0)).collect();
                let z: f64 = raw.iter().sum();
                raw.into_iter().map(|x| x / z).collect()
            })
            .collect();
        let mut best = (Vec::new(), f64::NEG_INFINITY);
        for a in 0..3usize {
            if a == 2 {
                let s = table[0][a].ln();
                if s > best.1 {
                    best = (vec![a], s);
                }
                continue;
            }
            for b in 0..3usize {
                let s = (table[0][a].ln() + table[1 + a][b].ln()) / 2.0;
                if s > best.1 {
                    best = (vec![a, b], s);
                }
            }
        }
        let h = beam_search(&Toy { table }, 9, 2);
        ensure(h.tokens == best.0, || format!("toy {seed}: beam {:?} vs argmax {:?}", h.tokens, best.0))?;
    }
    Ok("50 random pairs match brute force; identical inputs score 1; exhaustive beam = argmax on 50 toys".into())
}

/// Output directory of the first pipeline run, shared by criteria 7 and 9.
static RUN: OnceLock<Result<(PathBuf, Duration), String>> = OnceLock::new();
static WORK: OnceLock<tempfile::TempDir> = OnceLock::new();

fn workspace_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn qgrl(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_qgrl"))
        .args(args)
        .output()
        .map_err(|e| format!("running qgrl: {e}"))?;
    if !out.status.success() {
        return Err(format!("qgrl {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim()));
    }
    Ok(())
}

/// Synthesizes the corpus and runs the desk pipeline, evaluating on dev.
fn pipeline_run(work: &Path, name: &str) -> Result<PathBuf, String> {
    let config = workspace_file("configs/desk.toml");
    let config = config.to_str().ok_or("non-UTF-8 path")?;
    let data = work.join("data");
    let out = work.join(name);
    let (data_s, out_s) = (data.to_str().unwrap(), out.to_str().unwrap());
    if !data.join("train.jsonl").exists() {
        qgrl(&["synthesize", "--config", config, "--data-dir", data_s, "--out-dir", out_s])?;
    }
    qgrl(&["pipeline", "--config", config, "--data-dir", data_s, "--out-dir", out_s, "--paths.test", "dev.jsonl"])?;
    Ok(out)
}

fn first_run() -> Result<(PathBuf, Duration), String> {
    RUN.get_or_init(|| {
        let work = WORK.get_or_init(|| tempfile::tempdir().expect("temporary directory"));
        let t0 = Instant::now();
        pipeline_run(work.path(), "run-a").map(|p| (p, t0.elapsed()))
    })
    .clone()
}

fn read_json(path: &Path) -> Result<serde_json::Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

const TABLE_COLUMNS: [&str; 11] =
    ["Model", "F", "R", "A", "BLEU1", "BLEU4", "METEOR-exact", "ROUGE-L", "R-FLU", "R-REL", "R-ANS"];

fn directional_reproduction() -> Outcome {
    let (run, elapsed) = first_run()?;
    within(elapsed, 30 * 60, "pipeline")?;
    let pre = read_json(&run.join("pretrain/metrics.json"))?;
    let ratio = pre["perplexity_ratio"].as_f64().ok_or("no perplexity_ratio")?;
    ensure(ratio <= 1.5, || format!("(a) dev perplexity is {ratio:.3}x the entropy bound"))?;

    let report = read_json(&run.join("evaluate/report.json"))?;
    let rows = report["rows"].as_array().ok_or("report without rows")?;
    let row = |m: &str| rows.iter().find(|r| r["model"] == m).ok_or_else(|| format!("no {m} row"));
    let delta = |m: &str, k: usize| -> Result<f64, String> {
        row(m)?["delta"][k].as_f64().ok_or_else(|| format!("{m} has no delta {k}"))
    };
    let d_rel = delta("R", 1)?;
    let d_flu = delta("F", 0)?;
    ensure(d_rel > 0.0, || format!("(b) R model: delta R-REL {d_rel:+.4}"))?;
    ensure(d_flu > 0.0, || format!("(c) F model: delta R-FLU {d_flu:+.4}"))?;

    let text = std::fs::read_to_string(run.join("evaluate/report.txt")).map_err(|e| e.to_string())?;
    let header: Vec<&str> = text.lines().next().unwrap_or("").split_whitespace().collect();
    ensure(header == TABLE_COLUMNS, || format!("(d) columns {header:?}"))?;
    let mut flagged = 0;
    for line in text.lines().skip(2).take(rows.len()) {
        let cells: Vec<&str> = line.split_whitespace().collect();
        let r = row(cells[0].trim())?;
        let metrics = &cells[cells.len() - 7..];
        for (k, cell) in metrics.iter().enumerate() {
            let p = r["p_values"][k].as_f64();
            let want = p.is_some_and(|p| p < 0.01);
            ensure(cell.ends_with('*') == want, || format!("(d) {} column {k}: cell {cell}, p {p:?}", cells[0]))?;
            flagged += usize::from(want);
        }
    }
    Ok(format!(
        "ppl ratio {ratio:.3}, R: dR-REL {d_rel:+.2}, F: dR-FLU {d_flu:+.2}, {flagged} flags at p<0.01, {:.0}s",
        elapsed.as_secs_f64()
    ))
}

fn random_scores(rng: &mut ChaCha8Rng, n: usize, scale: RatingScale) -> (BTreeMap<String, f64>, BTreeMap<String, f64>) {
    let (lo, hi) = scale.bounds();
    let mut rewards = BTreeMap::new();
    let mut ratings = BTreeMap::new();
    for i in 0..n {
        let id = format!("q{i}");
        if rng.gen_bool(0.9) {
            rewards.insert(id.clone(), rng.gen_range(-10.0..10.0));
        }
        if rng.gen_bool(0.9) {
            // Thirds and halves exercise the rounding boundary.
            let steps = rng.gen_range(0..=6 * (hi - lo)) as f64;
            ratings.insert(id, lo as f64 + steps / 6.0);
        }
    }
    (rewards, ratings)
}

fn analysis_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for case in 0..20 {
        let n = rng.gen_range(3..40);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let (a, b) = (rng.gen_range(0.1..10.0), rng.gen_range(-10.0..10.0));
        let col = |name: &str, v: Vec<f64>| (name.to_string(), v.into_iter().map(Some).collect::<Vec<_>>());
        let m = pearson_matrix(&[
            col("x", x.clone()),
            col("same", x.clone()),
            col("neg", x.iter().map(|v| -v).collect()),
            col("affine", x.iter().map(|v| a * v + b).collect()),
            col("z", z),
        ])
        .map_err(|e| e.to_string())?;
        let get = |p: &str, q: &str| m.get(p, q).ok_or_else(|| format!("case {case}: {p}/{q} undefined"));
        ensure((get("x", "same")? - 1.0).abs() <= 1e-9, || format!("case {case}: identical columns"))?;
        ensure((get("x", "neg")? + 1.0).abs() <= 1e-9, || format!("case {case}: negated columns"))?;
        ensure((get("x", "z")? - get("affine", "z")?).abs() <= 1e-9, || format!("case {case}: affine transform"))?;
    }
    for case in 0..50 {
        let scale = RatingScale::ALL[case % 4];
        let n = rng.gen_range(0..60);
        let (rewards, ratings) = random_scores(&mut rng, n, scale);
        let got = reward_rating_distribution(&rewards, &ratings, scale).map_err(|e| e.to_string())?;
        let (lo, hi) = scale.bounds();
        for level in lo..=hi {
            let mut want: Vec<f64> = rewards
                .iter()
                .filter_map(|(id, &r)| {
                    let v = ratings.get(id)?;
                    // Ratings are non-negative, so rounding away from zero rounds halves up.
                    (v.round() as i64 == level).then_some(r)
                })
                .collect();
            want.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let stats = got.levels.iter().find(|l| l.level == level).ok_or_else(|| format!("case {case}: no level {level}"))?;
            let median = match want.len() {
                0 => None,
                k if k % 2 == 1 => Some(want[k / 2]),
                k => Some((want[k / 2 - 1] + want[k / 2]) / 2.0),
            };
            ensure(
                stats.count == want.len()
                    && stats.min == want.first().copied()
                    && stats.max == want.last().copied()
                    && stats.median == median,
                || format!("case {case} level {level}: {stats:?} vs {want:?}"),
            )?;
        }
    }
    Ok("pearson +-1 and affine invariance on 20 cases; 50 distributions match the sort oracle".into())
}

const REPORT_FILES: [&str; 12] = [
    "evaluate/report.csv",
    "evaluate/report.txt",
    "evaluate/report.json",
    "evaluate/mean_rewards.json",
    "analyze/correlations.csv",
    "analyze/rewards.csv",
    "analyze/summary_fluency.csv",
    "analyze/summary_relevance.csv",
    "analyze/summary_answerability.csv",
    "generate/pretrain.txt",
    "generate/FRA.txt",
    "pretrain/metrics.json",
];

fn reproducibility() -> Outcome {
    let (a, _) = first_run()?;
    let work = WORK.get().ok_or("no first run")?;
    let b = pipeline_run(work.path(), "run-b")?;
    for f in REPORT_FILES {
        let x = std::fs::read(a.join(f)).map_err(|e| format!("{f}: {e}"))?;
        let y = std::fs::read(b.join(f)).map_err(|e| format!("{f}: {e}"))?;
        ensure(x == y, || format!("{f} differs between runs"))?;
    }
    Ok(format!("{} report files byte-identical across two runs", REPORT_FILES.len()))
}

fn main() {
    let checks: [(&str, fn() -> Outcome); 9] = [
        ("reward-formula oracles", reward_oracles),
        ("reduction identities", reduction_identities),
        ("gradient checks", gradient_checks),
        ("distribution sanity", distribution_sanity),
        ("negative-sampling predicates", negative_predicates),
        ("metric oracles", metric_oracles),
        ("directional reproduction", directional_reproduction),
        ("analysis correctness", analysis_checks),
        ("reproducibility", reproducibility),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.iter().any(|f| *f == id || name.contains(f.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(msg)
        });
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {id} {name}: {detail} [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL {id} {name}: {why} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
