//! The library pipeline on a small synthetic corpus: oracles, pretraining,
//! fine-tuning, decoding and evaluation.

use qgrl_core::corpus::{build_vocab, Example};
use qgrl_core::generator::GeneratorConfig;
use qgrl_core::metrics::{self, ModelOutputs, Metric, ScoredOutputs};
use qgrl_core::nn::FitOptions;
use qgrl_core::oracles::discriminator::train_relevance_discriminator;
use qgrl_core::oracles::lm::train_lm;
use qgrl_core::oracles::qa::train_qa;
use qgrl_core::oracles::{
    make_negatives, DiscriminatorConfig, LmConfig, Oracles, QaConfig, RewardConfig, RewardKind, RewardSet,
};
use qgrl_core::synthetic::{self, entropy_perplexity, SyntheticConfig};
use qgrl_core::trainer::{self, BaselineConfig, LossWeights, TrainConfig, TrainOutputs};
use qgrl_core::{Generator32, Generator64};

fn corpus() -> synthetic::SyntheticCorpus {
    synthetic::generate(&SyntheticConfig {
        examples: 400,
        dev_examples: 40,
        test_examples: 40,
        rated_questions: 20,
        ..SyntheticConfig::default()
    })
    .unwrap()
}

fn fit(epochs: usize) -> FitOptions {
    FitOptions { epochs, batch_size: 32, learning_rate: 0.01, ..FitOptions::default() }
}

fn small_generator() -> GeneratorConfig {
    GeneratorConfig { hidden_size: 16, embedding_size: 16, max_decode_len: 16, beam_size: 2, ..GeneratorConfig::default() }
}

fn questions(examples: &[Example]) -> Vec<Vec<String>> {
    examples.iter().map(|e| e.question.clone()).collect()
}

#[test]
fn pipeline_on_a_small_corpus() {
    let c = corpus();
    let (train, dev, test) = (&c.train.examples, &c.dev.examples, &c.test.examples);

    let lm = train_lm::<f64>(train, dev, &LmConfig { hidden_size: 16, embedding_size: 16, train: fit(3), ..LmConfig::default() })
        .unwrap();
    let negs = make_negatives(train, 0).unwrap();
    let neg_examples: Vec<Example> = negs.negatives.iter().map(|n| n.example.clone()).collect();
    let disc = train_relevance_discriminator::<f64>(
        &negs.positives,
        &neg_examples,
        &DiscriminatorConfig { hidden_size: 8, embedding_size: 8, train: fit(2), ..DiscriminatorConfig::default() },
    )
    .unwrap();
    let qa = train_qa::<f64>(train, dev, &QaConfig { hidden_size: 8, embedding_size: 8, train: fit(2), ..QaConfig::default() })
        .unwrap();
    let oracles = Oracles { lm: Some(&lm), relevance: Some(&disc), qa: Some(&qa), config: RewardConfig::default() };

    let vocab = build_vocab(&c.train, usize::MAX, 1);
    let mut gen = Generator64::new(small_generator(), vocab, 0).unwrap();
    let untrained = gen.perplexity(dev);
    let pre_cfg = TrainConfig { batch_size: 32, learning_rate: 0.01, max_epochs: 3, ..TrainConfig::default() };
    let report =
        trainer::pretrain(&mut gen, train, dev, &pre_cfg, &LossWeights::default(), TrainOutputs::default()).unwrap();
    assert!(report.best_dev.unwrap() < report.initial_dev.unwrap());
    let ppl = gen.perplexity(dev);
    let bound = entropy_perplexity(dev, &c.entropy).unwrap();
    assert!(ppl < untrained && ppl >= bound * 0.999, "ppl {ppl}, bound {bound}, untrained {untrained}");

    let mut tuned = gen.clone();
    let ft_cfg = TrainConfig {
        rewards: RewardSet::ALL,
        batch_size: 32,
        learning_rate: 0.003,
        max_epochs: 1,
        max_sample_len: 16,
        dev_reward_limit: 20,
        ..TrainConfig::default()
    };
    let ft = trainer::finetune(
        &mut tuned,
        train,
        dev,
        oracles,
        &BaselineConfig::default(),
        &LossWeights::default(),
        &ft_cfg,
        TrainOutputs::default(),
    )
    .unwrap();
    let first = &ft.steps[0];
    for k in RewardKind::ALL {
        assert!(first.reward.contains_key(k.letter()), "{first:?}");
    }

    let docs: Vec<Vec<String>> = test.iter().map(|e| e.document.clone()).collect();
    let refs = questions(test);
    let score = |g: &Generator64| {
        let hyps = g.generate_all(&docs, 2, 16);
        let pairs: Vec<(&[String], &[String])> =
            docs.iter().zip(&hyps).map(|(d, h)| (d.as_slice(), h.as_slice())).collect();
        let rewards = oracles.score_all(RewardSet::ALL, &pairs).iter().map(|v| v.values).collect();
        (hyps, ScoredOutputs { oracle_fingerprint: "fixed".into(), rewards })
    };
    let (base_hyps, base_scored) = score(&gen);
    let (tuned_hyps, tuned_scored) = score(&tuned);
    let models = vec![
        ModelOutputs { name: "B1".into(), rewards: RewardSet::NONE, hypotheses: base_hyps.clone(), scored: Some(base_scored) },
        ModelOutputs { name: "F+R+A".into(), rewards: RewardSet::ALL, hypotheses: tuned_hyps, scored: Some(tuned_scored) },
    ];
    let table = metrics::evaluate(&refs, &models, 0, 1000, 0).unwrap();
    assert_eq!(table.rows.len(), 2);
    for row in &table.rows {
        for v in [row.bleu1, row.bleu4, row.meteor_exact, row.rouge_l] {
            assert!((0.0..=1.0).contains(&v));
        }
    }
    assert!(table.rows[1].delta.iter().all(|d| d.is_some_and(f64::is_finite)));
    assert_eq!(table.rows[0].bleu1, Metric::Bleu1.corpus(&base_hyps, &refs).unwrap());
    let csv = table.to_csv();
    assert!(csv.starts_with("Model,F,R,A,BLEU1,BLEU4,METEOR-exact,ROUGE-L,R-FLU,R-REL,R-ANS"));
}

#[test]
fn rewards_are_pure_given_frozen_oracles() {
    let c = corpus();
    let (train, dev) = (&c.train.examples, &c.dev.examples);
    let lm = train_lm::<f64>(train, dev, &LmConfig { hidden_size: 8, embedding_size: 8, train: fit(1), ..LmConfig::default() })
        .unwrap();
    let qa = train_qa::<f64>(train, dev, &QaConfig { hidden_size: 8, embedding_size: 8, train: fit(1), ..QaConfig::default() })
        .unwrap();
    let oracles = Oracles { lm: Some(&lm), relevance: None, qa: Some(&qa), config: RewardConfig::default() };
    let which: RewardSet = "F,A".parse().unwrap();
    let pairs: Vec<(&[String], &[String])> = dev.iter().map(|e| (e.document.as_slice(), e.question.as_slice())).collect();
    let parallel = oracles.score_all(which, &pairs);
    for (i, (d, q)) in pairs.iter().enumerate() {
        let (once, _) = oracles.rewards(which, d, q);
        let (twice, _) = oracles.rewards(which, d, q);
        assert_eq!(once, twice);
        assert_eq!(once, parallel[i]);
        assert_eq!(once.get(RewardKind::Relevance), None);
    }
}

#[test]
fn checkpoints_reload_to_identical_decodes() {
    let c = corpus();
    let vocab = build_vocab(&c.train, usize::MAX, 1);
    let gen = Generator64::new(small_generator(), vocab.clone(), 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.json");
    gen.save(&path).unwrap();
    let back = Generator64::load(&path, Some(&vocab)).unwrap();
    for ex in c.dev.examples.iter().take(10) {
        assert_eq!(gen.beam_search(&ex.document, 2, 8), back.beam_search(&ex.document, 2, 8));
    }

    let single = Generator32::new(small_generator(), vocab, 3).unwrap();
    let loss = single.mle_loss(&c.dev.examples[0]);
    assert!(loss.is_finite() && loss > 0.0);
}
