//! Subcommand implementations. Every subcommand writes into
//! `<out_dir>/<subcommand>/` alongside the resolved configuration and the
//! version string.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::json;

use qgrl_core::analysis::{self, load_human_ratings, write_analysis, RewardScores};
use qgrl_core::checkpoint::fingerprint;
use qgrl_core::corpus::{build_vocab, load_dataset, tokenize, Corpus, TokenizerKind};
use qgrl_core::metrics::{self, ModelOutputs, ReportTable, ScoredOutputs};
use qgrl_core::oracles::discriminator::train_relevance_discriminator;
use qgrl_core::oracles::lm::train_lm;
use qgrl_core::oracles::negatives::{load_labeled_pairs, write_labeled_pairs};
use qgrl_core::oracles::qa::train_qa;
use qgrl_core::oracles::{
    make_negatives, LanguageModel, Oracles, RelevanceDiscriminator, RewardKind, RewardSet, SpanQaModel,
};
use qgrl_core::synthetic::{self, entropy_perplexity, load_entropy, write_synthetic};
use qgrl_core::trainer::{self, TrainOutputs, TrainReport};
use qgrl_core::Generator64;

use crate::config::RunConfig;

pub const VERSION: &str = concat!("qgrl ", env!("CARGO_PKG_VERSION"));

/// Output locations shared between subcommands.
pub struct Layout<'a>(pub &'a RunConfig);

impl Layout<'_> {
    pub fn dir(&self, sub: &str) -> PathBuf {
        self.0.out_dir.join(sub)
    }
    pub fn generator(&self) -> PathBuf {
        self.dir("pretrain").join("model.json")
    }
    pub fn lm(&self) -> PathBuf {
        self.dir("train-lm").join("lm.json")
    }
    pub fn discriminator(&self) -> PathBuf {
        self.dir("train-disc").join("discriminator.json")
    }
    pub fn qa(&self) -> PathBuf {
        self.dir("train-qa").join("qa.json")
    }
    pub fn pairs(&self) -> PathBuf {
        self.dir("make-negatives").join("pairs.jsonl")
    }
    pub fn finetuned(&self, label: &str) -> PathBuf {
        self.dir("finetune").join(label).join("model.json")
    }
    pub fn hypotheses(&self, label: &str) -> PathBuf {
        self.dir("generate").join(format!("{label}.txt"))
    }
}

/// Short name of a reward combination: `FRA`, `R`, or `none`.
pub fn label(rewards: RewardSet) -> String {
    if rewards.is_empty() {
        return "none".into();
    }
    rewards.iter().map(|k| k.letter()).collect()
}

/// Report order of fine-tuned models.
const REPORT_ORDER: [&str; 7] = ["F", "R", "A", "FR", "RA", "FA", "FRA"];

fn report_rank(label: &str) -> (usize, String) {
    (REPORT_ORDER.iter().position(|l| *l == label).unwrap_or(REPORT_ORDER.len()), label.to_string())
}

fn require(path: &Path, producer: &str) -> Result<()> {
    if !path.exists() {
        bail!("missing upstream artifact {}: run `qgrl {producer}` first", path.display());
    }
    Ok(())
}

fn start(cfg: &RunConfig, sub: &str) -> Result<PathBuf> {
    let dir = cfg.out_dir.join(sub);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write(&dir.join("resolved_config.toml"), &cfg.to_toml())?;
    write(&dir.join("VERSION"), &format!("{VERSION}\n"))?;
    Ok(dir)
}

fn write(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn load_split(cfg: &RunConfig, file: &Path) -> Result<Corpus> {
    let path = cfg.data(file);
    if !path.exists() {
        bail!("missing data file {}: run `qgrl synthesize` or point --data-dir at a corpus", path.display());
    }
    Ok(load_dataset(&path)?)
}

fn train_summary(r: &TrainReport) -> serde_json::Value {
    json!({
        "steps": r.steps.len(),
        "epochs": r.epochs.len(),
        "best_epoch": r.best_epoch,
        "initial_dev_objective": r.initial_dev,
        "best_dev_objective": r.best_dev,
        "reward_failures": r.failures,
    })
}

pub fn synthesize(cfg: &RunConfig) -> Result<()> {
    let dir = start(cfg, "synthesize")?;
    let corpus = synthetic::generate(&cfg.synthetic)?;
    write_synthetic(&cfg.data_dir, &corpus)?;
    let vocab = build_vocab(&corpus.train, usize::MAX, 1);
    write_json(
        &dir.join("summary.json"),
        &json!({
            "data_dir": cfg.data_dir,
            "train": corpus.train.len(),
            "dev": corpus.dev.len(),
            "test": corpus.test.len(),
            "rated": corpus.rated.len(),
            "vocabulary": vocab.len(),
            "dev_entropy_perplexity": entropy_perplexity(&corpus.dev.examples, &corpus.entropy)?,
        }),
    )
}

pub fn pretrain(cfg: &RunConfig) -> Result<()> {
    let train = load_split(cfg, &cfg.paths.train)?;
    let dev = load_split(cfg, &cfg.paths.dev)?;
    let dir = start(cfg, "pretrain")?;
    let vocab = build_vocab(&train, cfg.generator.max_vocab, cfg.generator.min_freq);
    let mut gen = Generator64::new(cfg.generator.clone(), vocab, cfg.seed)?;
    let report = trainer::pretrain(
        &mut gen,
        &train.examples,
        &dev.examples,
        &cfg.pretrain,
        &cfg.weights,
        TrainOutputs::in_dir(&dir),
    )?;
    gen.save(dir.join("model.json"))?;
    let mut metrics = train_summary(&report);
    let ppl = gen.perplexity(&dev.examples);
    metrics["dev_perplexity"] = json!(ppl);
    let entropy_path = cfg.data(&cfg.paths.entropy);
    if entropy_path.exists() {
        let bound = entropy_perplexity(&dev.examples, &load_entropy(&entropy_path)?)?;
        metrics["dev_entropy_perplexity"] = json!(bound);
        metrics["perplexity_ratio"] = json!(ppl / bound);
    }
    write_json(&dir.join("metrics.json"), &metrics)
}

pub fn train_language_model(cfg: &RunConfig) -> Result<()> {
    let train = load_split(cfg, &cfg.paths.train)?;
    let dev = load_split(cfg, &cfg.paths.dev)?;
    let dir = start(cfg, "train-lm")?;
    let lm = train_lm::<f64>(&train.examples, &dev.examples, &cfg.lm)?;
    lm.save(dir.join("lm.json"))?;
    write_json(&dir.join("scores.json"), &json!({ "dev_perplexity": lm.dev_perplexity }))
}

pub fn negatives(cfg: &RunConfig) -> Result<()> {
    let train = load_split(cfg, &cfg.paths.train)?;
    let dir = start(cfg, "make-negatives")?;
    let set = make_negatives(&train.examples, cfg.seed)?;
    write_labeled_pairs(dir.join("pairs.jsonl"), &train.header, &set)?;
    let mut made: BTreeMap<&str, usize> = BTreeMap::new();
    for n in &set.negatives {
        *made.entry(n.kind.id()).or_default() += 1;
    }
    let skipped: BTreeMap<&str, usize> = set.skipped.iter().map(|(k, v)| (k.id(), *v)).collect();
    write_json(
        &dir.join("stats.json"),
        &json!({ "positives": set.positives.len(), "negatives": made, "skipped": skipped }),
    )
}

pub fn train_discriminator(cfg: &RunConfig) -> Result<()> {
    let layout = Layout(cfg);
    require(&layout.pairs(), "make-negatives")?;
    let dir = start(cfg, "train-disc")?;
    let (pos, neg) = load_labeled_pairs(layout.pairs())?;
    let model = train_relevance_discriminator::<f64>(&pos, &neg, &cfg.discriminator)?;
    model.save(dir.join("discriminator.json"))?;
    write_json(&dir.join("scores.json"), &json!({ "heldout": model.heldout }))
}

pub fn train_span_qa(cfg: &RunConfig) -> Result<()> {
    let train = load_split(cfg, &cfg.paths.train)?;
    let dev = load_split(cfg, &cfg.paths.dev)?;
    let dir = start(cfg, "train-qa")?;
    let model = train_qa::<f64>(&train.examples, &dev.examples, &cfg.qa)?;
    model.save(dir.join("qa.json"))?;
    write_json(&dir.join("scores.json"), &json!({ "dev": model.dev_scores }))
}

/// Oracle checkpoints loaded from the run directory.
#[derive(Default)]
struct LoadedOracles {
    lm: Option<LanguageModel<f64>>,
    discriminator: Option<RelevanceDiscriminator<f64>>,
    qa: Option<SpanQaModel<f64>>,
}

impl LoadedOracles {
    /// Loads the oracles in `which`; with `required` a missing checkpoint
    /// is an error, otherwise it is skipped.
    fn load(cfg: &RunConfig, which: RewardSet, required: bool) -> Result<Self> {
        let layout = Layout(cfg);
        let mut out = LoadedOracles::default();
        for k in which.iter() {
            let (path, producer) = match k {
                RewardKind::Fluency => (layout.lm(), "train-lm"),
                RewardKind::Relevance => (layout.discriminator(), "train-disc"),
                RewardKind::Answerability => (layout.qa(), "train-qa"),
            };
            if !path.exists() {
                if required {
                    require(&path, producer)?;
                }
                continue;
            }
            match k {
                RewardKind::Fluency => out.lm = Some(LanguageModel::load(&path)?),
                RewardKind::Relevance => out.discriminator = Some(RelevanceDiscriminator::load(&path)?),
                RewardKind::Answerability => out.qa = Some(SpanQaModel::load(&path)?),
            }
        }
        Ok(out)
    }

    fn oracles(&self, cfg: &RunConfig) -> Oracles<'_, f64> {
        Oracles {
            lm: self.lm.as_ref().map(|m| m as _),
            relevance: self.discriminator.as_ref().map(|m| m as _),
            qa: self.qa.as_ref().map(|m| m as _),
            config: cfg.reward,
        }
    }

    fn fingerprint(&self) -> String {
        [
            self.lm.as_ref().map(|m| fingerprint(m.params())),
            self.discriminator.as_ref().map(|m| fingerprint(m.params())),
            self.qa.as_ref().map(|m| fingerprint(m.params())),
        ]
        .iter()
        .map(|f| f.clone().unwrap_or_else(|| "-".into()))
        .collect::<Vec<_>>()
        .join(":")
    }
}

pub fn finetune(cfg: &RunConfig) -> Result<()> {
    let layout = Layout(cfg);
    let tag = label(cfg.finetune.rewards);
    require(&layout.generator(), "pretrain")?;
    let oracles = LoadedOracles::load(cfg, cfg.finetune.rewards, true)?;
    let train = load_split(cfg, &cfg.paths.train)?;
    let dev = load_split(cfg, &cfg.paths.dev)?;
    let dir = start(cfg, &format!("finetune/{tag}"))?;
    let mut gen = Generator64::load(layout.generator(), None)?;
    let report = trainer::finetune(
        &mut gen,
        &train.examples,
        &dev.examples,
        oracles.oracles(cfg),
        &cfg.baselines,
        &cfg.weights,
        &cfg.finetune,
        TrainOutputs::in_dir(&dir),
    )?;
    gen.save(dir.join("model.json"))?;
    let mut metrics = train_summary(&report);
    metrics["rewards"] = json!(cfg.finetune.rewards);
    metrics["dev_perplexity"] = json!(gen.perplexity(&dev.examples));
    write_json(&dir.join("metrics.json"), &metrics)
}

/// Fine-tuned model labels with a checkpoint, in report order.
fn finetuned_labels(cfg: &RunConfig) -> Result<Vec<String>> {
    let root = Layout(cfg).dir("finetune");
    let mut labels = Vec::new();
    if root.is_dir() {
        for entry in std::fs::read_dir(&root).with_context(|| format!("listing {}", root.display()))? {
            let entry = entry?;
            if entry.path().join("model.json").exists() {
                labels.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
    }
    labels.sort_by_key(|l| report_rank(l));
    Ok(labels)
}

pub fn generate(cfg: &RunConfig, models: &[String]) -> Result<()> {
    let layout = Layout(cfg);
    let labels: Vec<String> = if models.is_empty() {
        std::iter::once("pretrain".to_string()).chain(finetuned_labels(cfg)?).collect()
    } else {
        models.to_vec()
    };
    let paths: Vec<(String, PathBuf)> = labels
        .iter()
        .map(|l| {
            let p = if l == "pretrain" { layout.generator() } else { layout.finetuned(l) };
            let producer = if l == "pretrain" { "pretrain".to_string() } else { format!("finetune --rewards {l}") };
            require(&p, &producer).map(|_| (l.clone(), p))
        })
        .collect::<Result<_>>()?;
    let test = load_split(cfg, &cfg.paths.test)?;
    let dir = start(cfg, "generate")?;
    let docs: Vec<Vec<String>> = test.examples.iter().map(|e| e.document.clone()).collect();
    for (l, path) in paths {
        let gen = Generator64::load(&path, None)?;
        let hyps = gen.generate_all(&docs, cfg.generator.beam_size, cfg.generator.max_decode_len);
        let mut body = String::new();
        for h in &hyps {
            let _ = writeln!(body, "{}", h.join(" "));
        }
        write(&dir.join(format!("{l}.txt")), &body)?;
        write_json(
            &dir.join(format!("{l}.json")),
            &json!({
                "checkpoint": path,
                "documents": cfg.data(&cfg.paths.test),
                "examples": hyps.len(),
                "beam_size": cfg.generator.beam_size,
                "max_decode_len": cfg.generator.max_decode_len,
                "length_normalization": "mean log-probability",
            }),
        )?;
    }
    Ok(())
}

fn read_questions(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .map(|l| tokenize(l, TokenizerKind::WhitespacePunct).unwrap_or_default())
        .collect())
}

fn model_name(label: &str) -> String {
    if label == "pretrain" {
        return "B1".into();
    }
    label.chars().map(String::from).collect::<Vec<_>>().join("+")
}

fn write_report(dir: &Path, table: &ReportTable) -> Result<()> {
    write(&dir.join("report.csv"), &table.to_csv())?;
    write(&dir.join("report.txt"), &table.to_text())?;
    write_json(&dir.join("report.json"), table)
}

pub fn evaluate(cfg: &RunConfig, hyp: Option<&Path>, reference: Option<&Path>) -> Result<()> {
    match (hyp, reference) {
        (Some(h), Some(r)) => {
            let dir = start(cfg, "evaluate")?;
            let hyps = read_questions(h)?;
            let refs = read_questions(r)?;
            let name = h.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned());
            let model = ModelOutputs { name, rewards: RewardSet::NONE, hypotheses: hyps, scored: None };
            let table = metrics::evaluate(&refs, &[model], 0, cfg.evaluate.resamples, cfg.seed)?;
            return write_report(&dir, &table);
        }
        (None, None) => {}
        _ => bail!("--hyp and --ref must be given together"),
    }
    let layout = Layout(cfg);
    require(&layout.hypotheses("pretrain"), "generate")?;
    let test = load_split(cfg, &cfg.paths.test)?;
    let mut labels = vec!["pretrain".to_string()];
    let mut rest: Vec<String> = Vec::new();
    let gen_dir = layout.dir("generate");
    for entry in std::fs::read_dir(&gen_dir).with_context(|| format!("listing {}", gen_dir.display()))? {
        let p = entry?.path();
        if p.extension().is_some_and(|e| e == "txt") {
            let stem = p.file_stem().unwrap().to_string_lossy().into_owned();
            if stem != "pretrain" {
                rest.push(stem);
            }
        }
    }
    rest.sort_by_key(|l| report_rank(l));
    labels.extend(rest);
    let oracles = LoadedOracles::load(cfg, RewardSet::ALL, false)?;
    let active = oracles.oracles(cfg);
    let available = active.available();
    let fp = oracles.fingerprint();
    let dir = start(cfg, "evaluate")?;
    let refs: Vec<Vec<String>> = test.examples.iter().map(|e| e.question.clone()).collect();
    let mut models = Vec::new();
    for l in &labels {
        let hyps = read_questions(&layout.hypotheses(l))?;
        if hyps.len() != refs.len() {
            bail!(
                "{} has {} questions but the test split has {}; rerun `qgrl generate`",
                layout.hypotheses(l).display(),
                hyps.len(),
                refs.len()
            );
        }
        let scored = if available.is_empty() {
            None
        } else {
            let pairs: Vec<(&[String], &[String])> =
                test.examples.iter().zip(&hyps).map(|(e, h)| (e.document.as_slice(), h.as_slice())).collect();
            let values = active.score_all(available, &pairs);
            Some(ScoredOutputs { oracle_fingerprint: fp.clone(), rewards: values.iter().map(|v| v.values).collect() })
        };
        let rewards = if l == "pretrain" { RewardSet::NONE } else { l.parse().unwrap_or(RewardSet::NONE) };
        models.push(ModelOutputs { name: model_name(l), rewards, hypotheses: hyps, scored });
    }
    let table = metrics::evaluate(&refs, &models, 0, cfg.evaluate.resamples, cfg.seed)?;
    write_report(&dir, &table)?;
    let mut means = serde_json::Map::new();
    for m in &models {
        if let Some(s) = &m.scored {
            let mut row = serde_json::Map::new();
            for k in RewardKind::ALL {
                let vals: Vec<f64> = s.rewards.iter().filter_map(|r| r[k.index()]).collect();
                if !vals.is_empty() {
                    row.insert(k.column().into(), json!(vals.iter().sum::<f64>() / vals.len() as f64));
                }
            }
            means.insert(m.name.clone(), serde_json::Value::Object(row));
        }
    }
    write_json(&dir.join("mean_rewards.json"), &means)
}

pub fn analyze(cfg: &RunConfig) -> Result<()> {
    let ratings_path = cfg.data(&cfg.paths.ratings);
    if !ratings_path.exists() {
        bail!("missing ratings file {}: run `qgrl synthesize` or supply one", ratings_path.display());
    }
    let oracles = LoadedOracles::load(cfg, RewardSet::ALL, true)?;
    let rated = load_split(cfg, &cfg.paths.rated)?;
    let ratings = load_human_ratings(&ratings_path)?;
    let dir = start(cfg, "analyze")?;
    let pairs: Vec<(&[String], &[String])> =
        rated.examples.iter().map(|e| (e.document.as_slice(), e.question.as_slice())).collect();
    let values = oracles.oracles(cfg).score_all(RewardSet::ALL, &pairs);
    let mut scores = RewardScores::new();
    let mut csv = String::from("id,R-FLU,R-REL,R-ANS\n");
    for (ex, v) in rated.examples.iter().zip(&values) {
        scores.insert(ex.id.clone(), v.values);
        let cell = |x: Option<f64>| x.map(|x| format!("{x:.6}")).unwrap_or_default();
        let _ = writeln!(csv, "{},{},{},{}", ex.id, cell(v.values[0]), cell(v.values[1]), cell(v.values[2]));
    }
    write(&dir.join("rewards.csv"), &csv)?;
    let report = analysis::analyze(&ratings, &scores)?;
    Ok(write_analysis(&dir, &report)?)
}

/// Every stage in order on one configuration.
pub fn pipeline(cfg: &RunConfig) -> Result<()> {
    start(cfg, "pipeline")?;
    pretrain(cfg)?;
    train_language_model(cfg)?;
    negatives(cfg)?;
    train_discriminator(cfg)?;
    train_span_qa(cfg)?;
    let mut models = vec!["pretrain".to_string()];
    for set in &cfg.pipeline.finetune_sets {
        let mut c = cfg.clone();
        c.finetune.rewards = *set;
        finetune(&c)?;
        models.push(label(*set));
    }
    generate(cfg, &models)?;
    evaluate(cfg, None, None)?;
    analyze(cfg)
}
