//! Templated desk-scale corpus: short biographies, questions about one of
//! their facts, marked answer spans and entity annotations, plus a small
//! set of degraded questions with simulated human ratings.
//!
//! The question distribution given a document is known exactly, so the
//! conditional entropy of every gold question is available as a reference
//! for perplexity.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::RATINGS_HEADER;
use crate::corpus::{write_dataset, Corpus, CorpusHeader, EntitySpan, Example, Split, TokenizerKind};
use crate::error::{Error, Result};

const PEOPLE: [&str; 40] = [
    "alvarez", "bianchi", "castro", "dubois", "eriksen", "fischer", "garcia", "haddad", "ivanova",
    "jensen", "kowalski", "larsen", "moreau", "nakamura", "okafor", "petrov", "quinn", "rossi",
    "sato", "tanaka", "ueda", "varga", "weber", "xu", "yilmaz", "zhou", "abbott", "brennan",
    "carver", "delgado", "ellison", "foster", "grant", "hughes", "irwin", "keller", "lambert",
    "mendes", "novak", "ortega",
];
const ORGS: [&str; 24] = [
    "acme", "globex", "initech", "umbrella", "hooli", "vandelay", "stark", "wayne", "cyberdyne",
    "tyrell", "soylent", "oscorp", "wonka", "gringotts", "monarch", "nakatomi", "virtucon",
    "dunder", "sterling", "pendant", "massive", "aperture", "blackmesa", "zorg",
];
const PLACES: [&str; 24] = [
    "paris", "lima", "oslo", "cairo", "quito", "riga", "turin", "porto", "dakar", "hanoi", "kyoto",
    "bern", "sofia", "accra", "lagos", "perth", "austin", "denver", "dublin", "malmo", "graz",
    "split", "nice", "ghent",
];
const WORKS: [&str; 20] = [
    "odyssey", "nocturne", "solstice", "meridian", "labyrinth", "equinox", "harbinger", "reverie",
    "zenith", "aurora", "cascade", "ember", "fathom", "gossamer", "halcyon", "inkwell", "juniper",
    "kestrel", "lantern", "mosaic",
];
const FIRST_YEAR: u32 = 1940;
const YEARS: u32 = 60;

pub const ENTITY_TYPES: [&str; 5] = ["PER", "ORG", "LOC", "DATE", "WORK"];

/// A single-token gazetteer over the synthetic entity lists.
pub fn gazetteer() -> BTreeMap<String, &'static str> {
    let mut g = BTreeMap::new();
    for (list, label) in [(&PEOPLE[..], "PER"), (&ORGS[..], "ORG"), (&PLACES[..], "LOC"), (&WORKS[..], "WORK")] {
        for w in list {
            g.insert(w.to_string(), label);
        }
    }
    for y in FIRST_YEAR..FIRST_YEAR + YEARS {
        g.insert(y.to_string(), "DATE");
    }
    g
}

/// Tags every token found in `gazetteer`.
pub fn tag_entities(tokens: &[String], gazetteer: &BTreeMap<String, &'static str>) -> Vec<EntitySpan> {
    tokens
        .iter()
        .enumerate()
        .filter_map(|(i, t)| gazetteer.get(t).map(|l| EntitySpan { start: i, end: i, label: l.to_string() }))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FactKind {
    Born,
    Founded,
    Wrote,
}

#[derive(Debug, Clone)]
struct Fact {
    kind: FactKind,
    /// Place, organisation or work.
    object: String,
    year: String,
}

impl Fact {
    fn sentence(&self, person: &str) -> Vec<String> {
        let s = match self.kind {
            FactKind::Born => format!("{person} was born in {} in {} .", self.object, self.year),
            FactKind::Founded => format!("{person} founded {} in {} .", self.object, self.year),
            FactKind::Wrote => format!("{person} wrote {} in {} .", self.object, self.year),
        };
        words(&s)
    }

    /// The three questions about this fact with the answer token.
    fn questions(&self, person: &str) -> [(Vec<String>, String); 3] {
        let (o, y, p) = (&self.object, &self.year, person.to_string());
        match self.kind {
            FactKind::Born => [
                (words(&format!("where was {p} born ?")), o.clone()),
                (words(&format!("when was {p} born ?")), y.clone()),
                (words(&format!("who was born in {o} ?")), p.clone()),
            ],
            FactKind::Founded => [
                (words(&format!("who founded {o} ?")), p.clone()),
                (words(&format!("when was {o} founded ?")), y.clone()),
                (words(&format!("what did {p} found ?")), o.clone()),
            ],
            FactKind::Wrote => [
                (words(&format!("who wrote {o} ?")), p.clone()),
                (words(&format!("when did {p} write {o} ?")), y.clone()),
                (words(&format!("what did {p} write ?")), o.clone()),
            ],
        }
    }
}

fn words(s: &str) -> Vec<String> {
    s.split(' ').map(String::from).collect()
}

struct Document {
    person: String,
    facts: Vec<Fact>,
    tokens: Vec<String>,
}

impl Document {
    fn sample(rng: &mut ChaCha8Rng) -> Document {
        let person = PEOPLE.choose(rng).unwrap().to_string();
        let mut kinds = vec![FactKind::Born, FactKind::Founded, FactKind::Wrote];
        kinds.shuffle(rng);
        kinds.truncate(rng.gen_range(2..=3));
        let mut years: Vec<u32> = (FIRST_YEAR..FIRST_YEAR + YEARS).collect();
        years.shuffle(rng);
        let facts: Vec<Fact> = kinds
            .into_iter()
            .zip(years)
            .map(|(kind, y)| {
                let pool: &[&str] = match kind {
                    FactKind::Born => &PLACES,
                    FactKind::Founded => &ORGS,
                    FactKind::Wrote => &WORKS,
                };
                Fact { kind, object: pool.choose(rng).unwrap().to_string(), year: y.to_string() }
            })
            .collect();
        let tokens = facts.iter().flat_map(|f| f.sentence(&person)).collect();
        Document { person, facts, tokens }
    }

    /// Every question the grammar can emit with its probability and answer.
    fn question_distribution(&self) -> Vec<(Vec<String>, f64, String)> {
        let p = 1.0 / (3 * self.facts.len()) as f64;
        let mut out: Vec<(Vec<String>, f64, String)> = Vec::new();
        for f in &self.facts {
            for (q, a) in f.questions(&self.person) {
                match out.iter_mut().find(|e| e.0 == q) {
                    Some(e) => e.1 += p,
                    None => out.push((q, p, a)),
                }
            }
        }
        out
    }

    fn entropy(&self) -> f64 {
        self.question_distribution().iter().map(|(_, p, _)| -p * p.ln()).sum()
    }
}

/// Corpus size and split settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub examples: usize,
    pub dev_examples: usize,
    pub test_examples: usize,
    pub rated_questions: usize,
    pub raters: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig { examples: 2000, dev_examples: 200, test_examples: 200, rated_questions: 150, raters: 3, seed: 0 }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dev_examples + self.test_examples >= self.examples {
            return Err(Error::Config("dev and test splits leave no training examples".into()));
        }
        if self.raters == 0 {
            return Err(Error::Config("raters must be positive".into()));
        }
        Ok(())
    }
}

/// The generated splits, per-example question entropies (nats), and the
/// rated question set with its ratings file.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
    pub entropy: BTreeMap<String, f64>,
    pub rated: Corpus,
    pub ratings_csv: String,
}

/// `exp(sum H / sum T)` over `examples`, where `T` counts question tokens
/// plus the end marker: the perplexity of the true question distribution.
pub fn entropy_perplexity(examples: &[Example], entropy: &BTreeMap<String, f64>) -> Result<f64> {
    let mut h = 0.0;
    let mut t = 0usize;
    for ex in examples {
        h += entropy
            .get(&ex.id)
            .ok_or_else(|| Error::invalid(format!("no entropy recorded for {}", ex.id)))?;
        t += ex.question.len() + 1;
    }
    if t == 0 {
        return Err(Error::invalid("no examples"));
    }
    Ok((h / t as f64).exp())
}

fn header(split: Split) -> CorpusHeader {
    CorpusHeader {
        tokenizer: TokenizerKind::default(),
        entity_types: ENTITY_TYPES.iter().map(|s| s.to_string()).collect(),
        split,
    }
}

fn answer_position(doc: &[String], answer: &str) -> Option<(usize, usize)> {
    doc.iter().position(|t| t == answer).map(|i| (i, i))
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let gaz = gazetteer();
    let mut entropy = BTreeMap::new();
    let mut all = Vec::with_capacity(cfg.examples);
    let mut docs = Vec::with_capacity(cfg.examples);
    for i in 0..cfg.examples {
        let doc = Document::sample(&mut rng);
        let dist = doc.question_distribution();
        let (question, _, answer) = dist[rng.gen_range(0..dist.len())].clone();
        let id = format!("syn-{i:05}");
        entropy.insert(id.clone(), doc.entropy());
        all.push(Example {
            id,
            answer_span: answer_position(&doc.tokens, &answer),
            entities: tag_entities(&doc.tokens, &gaz),
            document: doc.tokens.clone(),
            question,
        });
        docs.push(doc);
    }
    let n_train = cfg.examples - cfg.dev_examples - cfg.test_examples;
    let test_ex = all.split_off(n_train + cfg.dev_examples);
    let dev_ex = all.split_off(n_train);
    let test_docs = &docs[n_train + cfg.dev_examples..];
    let (rated, ratings_csv) = rated_questions(&test_ex, test_docs, cfg, &mut rng);
    Ok(SyntheticCorpus {
        train: Corpus { header: header(Split::Train), examples: all },
        dev: Corpus { header: header(Split::Dev), examples: dev_ex },
        test: Corpus { header: header(Split::Test), examples: test_ex },
        entropy,
        rated: Corpus { header: header(Split::Test), examples: rated },
        ratings_csv,
    })
}

/// Ratings `[fluency, relevance, answerability, complexity]`; `None` for
/// sub-ratings of unreadable questions.
type TrueRating = (f64, Option<f64>, Option<f64>, Option<f64>);

fn degrade(
    kind: usize,
    ex: &Example,
    doc: &Document,
    others: &[Example],
    rng: &mut ChaCha8Rng,
) -> (Vec<String>, TrueRating) {
    let q = ex.question.clone();
    let cpx = Some(if q.len() > 5 { 2.0 } else { 1.0 });
    match kind {
        // Untouched.
        0 => (q, (5.0, Some(3.0), Some(1.0), cpx)),
        // One adjacent swap inside the question body.
        1 => {
            let mut q = q;
            let i = rng.gen_range(0..q.len() - 2);
            q.swap(i, i + 1);
            (q, (3.0, Some(2.0), Some(1.0), cpx))
        }
        // Shuffled beyond recognition.
        2 => {
            let mut q = q;
            while q == ex.question {
                q.shuffle(rng);
            }
            (q, (1.0, None, None, None))
        }
        // A grammatical question about an entity the document lacks.
        3 => {
            let gaz = gazetteer();
            let mut q = q;
            let slots: Vec<usize> = (0..q.len()).filter(|&i| gaz.contains_key(&q[i])).collect();
            let i = *slots.choose(rng).unwrap();
            let label = gaz[&q[i]];
            let pool: Vec<&String> = gaz
                .iter()
                .filter(|(w, l)| **l == label && !doc.tokens.contains(w))
                .map(|(w, _)| w)
                .collect();
            q[i] = pool.choose(rng).unwrap().to_string();
            (q, (5.0, Some(1.0), Some(0.0), cpx))
        }
        // Another document's question, missing a token when long enough.
        _ => {
            let other = others.choose(rng).unwrap();
            let mut q = other.question.clone();
            if q.len() > 4 {
                q.remove(q.len() - 2);
                (q, (2.0, Some(1.0), Some(0.0), cpx))
            } else {
                (q, (5.0, Some(1.0), Some(0.0), cpx))
            }
        }
    }
}

fn rated_questions(
    test: &[Example],
    docs: &[Document],
    cfg: &SyntheticConfig,
    rng: &mut ChaCha8Rng,
) -> (Vec<Example>, String) {
    let mut examples = Vec::new();
    let mut csv = RATINGS_HEADER.join(",");
    csv.push('\n');
    for i in 0..cfg.rated_questions.min(test.len() * 5) {
        let j = i % test.len();
        let (ex, doc) = (&test[j], &docs[j]);
        let (question, truth) = degrade(i % 5, ex, doc, test, rng);
        let id = format!("rated-{i:04}");
        for _ in 0..cfg.raters {
            let noisy = |v: f64, lo: f64, hi: f64, rng: &mut ChaCha8Rng| {
                let d = [-1.0, 0.0, 0.0, 0.0, 1.0][rng.gen_range(0..5)];
                (v + d).clamp(lo, hi)
            };
            let f = noisy(truth.0, 1.0, 5.0, rng);
            let cell = |v: Option<f64>, lo: f64, hi: f64, rng: &mut ChaCha8Rng| {
                v.map(|v| format!("{}", noisy(v, lo, hi, rng))).unwrap_or_default()
            };
            let r = cell(truth.1, 1.0, 3.0, rng);
            let a = cell(truth.2, 0.0, 1.0, rng);
            let c = cell(truth.3, 1.0, 3.0, rng);
            let _ = writeln!(csv, "{id},{f},{r},{a},{c},1");
        }
        examples.push(Example {
            id,
            document: ex.document.clone(),
            question,
            answer_span: None,
            entities: ex.entities.clone(),
        });
    }
    (examples, csv)
}

/// File names written by [`write_synthetic`].
pub const SYNTHETIC_FILES: [&str; 6] =
    ["train.jsonl", "dev.jsonl", "test.jsonl", "rated.jsonl", "ratings.csv", "entropy.json"];

pub fn write_synthetic(dir: impl AsRef<Path>, c: &SyntheticCorpus) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_dataset(dir.join("train.jsonl"), &c.train)?;
    write_dataset(dir.join("dev.jsonl"), &c.dev)?;
    write_dataset(dir.join("test.jsonl"), &c.test)?;
    write_dataset(dir.join("rated.jsonl"), &c.rated)?;
    let p = dir.join("ratings.csv");
    std::fs::write(&p, &c.ratings_csv).map_err(|e| Error::io(&p, e))?;
    let p = dir.join("entropy.json");
    let body = serde_json::to_string_pretty(&c.entropy)? + "\n";
    std::fs::write(&p, body).map_err(|e| Error::io(&p, e))
}

/// Reads an `entropy.json` written by [`write_synthetic`].
pub fn load_entropy(path: impl AsRef<Path>) -> Result<BTreeMap<String, f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::parse_human_ratings;
    use crate::corpus::{build_vocab, load_dataset};

    fn small() -> SyntheticCorpus {
        generate(&SyntheticConfig { examples: 300, dev_examples: 30, test_examples: 30, ..Default::default() })
            .unwrap()
    }

    #[test]
    fn splits_and_validity() {
        let c = small();
        assert_eq!((c.train.len(), c.dev.len(), c.test.len()), (240, 30, 30));
        let labels: Vec<String> = ENTITY_TYPES.iter().map(|s| s.to_string()).collect();
        for ex in c.train.examples.iter().chain(&c.dev.examples) {
            ex.validate(&labels).unwrap();
            let ans = ex.answer_tokens().unwrap();
            assert_eq!(ans.len(), 1);
            assert!(!ex.entities.is_empty());
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = small();
        let b = small();
        assert_eq!(a.train, b.train);
        assert_eq!(a.ratings_csv, b.ratings_csv);
        let c = generate(&SyntheticConfig { examples: 300, dev_examples: 30, test_examples: 30, seed: 1, ..Default::default() })
            .unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn entropy_is_log_of_question_count() {
        // Every (fact, template) pair yields a distinct question.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let d = Document::sample(&mut rng);
            let dist = d.question_distribution();
            assert_eq!(dist.len(), 3 * d.facts.len());
            assert!((d.entropy() - ((3 * d.facts.len()) as f64).ln()).abs() < 1e-12);
            assert!((dist.iter().map(|e| e.1).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn answers_are_tagged_entities() {
        let c = small();
        for ex in &c.train.examples {
            let (s, _) = ex.answer_span.unwrap();
            assert!(ex.entities.iter().any(|e| e.start == s));
        }
    }

    #[test]
    fn vocabulary_is_desk_sized() {
        let c = generate(&SyntheticConfig::default()).unwrap();
        let v = build_vocab(&c.train, 100_000, 1);
        assert!((150..=260).contains(&v.len()), "{}", v.len());
    }

    #[test]
    fn ratings_parse_and_cover_rated_questions() {
        let c = small();
        let r = parse_human_ratings("ratings.csv", &c.ratings_csv).unwrap();
        assert_eq!(r.len(), c.rated.len());
        assert!(r.values().all(|x| x.raters == 3));
        assert!(r.values().any(|x| x.relevance.is_none()));
    }

    #[test]
    fn files_round_trip() {
        let c = small();
        let dir = tempfile::tempdir().unwrap();
        write_synthetic(dir.path(), &c).unwrap();
        assert_eq!(load_dataset(dir.path().join("dev.jsonl")).unwrap().examples, c.dev.examples);
        let e = load_entropy(dir.path().join("entropy.json")).unwrap();
        assert_eq!(e.len(), 300);
        let ppl = entropy_perplexity(&c.dev.examples, &e).unwrap();
        assert!(ppl > 1.0 && ppl < 2.0, "{ppl}");
    }
}
