//! Negative question construction for the relevance discriminator:
//! question swaps, inter-document entity swaps and intra-document entity
//! swaps.
//!
//! An entity "in the question" is a document entity whose surface form
//! occurs as a token run in the question. Swaps replace every occurrence of
//! the chosen surface form.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use std::path::Path;

use crate::corpus::{
    contains_run, header_line, parse_records, read_text, record_line, write_text, CorpusHeader,
    Example, RecordExtras,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NegativeKind {
    QuestionSwap,
    InterDocEntitySwap,
    IntraDocEntitySwap,
}

impl NegativeKind {
    pub const ALL: [NegativeKind; 3] = [
        NegativeKind::QuestionSwap,
        NegativeKind::InterDocEntitySwap,
        NegativeKind::IntraDocEntitySwap,
    ];

    pub fn id(self) -> &'static str {
        match self {
            NegativeKind::QuestionSwap => "qswap",
            NegativeKind::InterDocEntitySwap => "inter",
            NegativeKind::IntraDocEntitySwap => "intra",
        }
    }
}

impl fmt::Display for NegativeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// A generated negative pair and what was changed to make it.
#[derive(Debug, Clone, PartialEq)]
pub struct Negative {
    pub example: Example,
    pub kind: NegativeKind,
    /// Id of the example that supplied the question (question swaps).
    pub donor: Option<String>,
    /// `(original surface, replacement surface)` (entity swaps).
    pub replaced: Option<(Vec<String>, Vec<String>)>,
}

/// Distinct entity surface forms per type label, in first-occurrence order.
pub type EntityInventory = BTreeMap<String, Vec<Vec<String>>>;

pub fn entity_inventory<'a>(examples: impl IntoIterator<Item = &'a Example>) -> EntityInventory {
    let mut inv = EntityInventory::new();
    for ex in examples {
        for e in &ex.entities {
            let surface = ex.entity_tokens(e).to_vec();
            let list = inv.entry(e.label.clone()).or_default();
            if !list.contains(&surface) {
                list.push(surface);
            }
        }
    }
    inv
}

/// Distinct `(surface, label)` pairs of the document's entities.
fn document_entities(ex: &Example) -> Vec<(Vec<String>, String)> {
    let mut out: Vec<(Vec<String>, String)> = Vec::new();
    for e in &ex.entities {
        let pair = (ex.entity_tokens(e).to_vec(), e.label.clone());
        if !out.contains(&pair) {
            out.push(pair);
        }
    }
    out
}

/// Document entities mentioned in the question.
pub fn question_entities(ex: &Example) -> Vec<(Vec<String>, String)> {
    document_entities(ex)
        .into_iter()
        .filter(|(s, _)| contains_run(&ex.question, s))
        .collect()
}

/// Replaces every non-overlapping occurrence of `from`, scanning left to
/// right.
pub fn replace_all(tokens: &[String], from: &[String], to: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        if !from.is_empty() && tokens[i..].starts_with(from) {
            out.extend_from_slice(to);
            i += from.len();
        } else {
            out.push(tokens[i].clone());
            i += 1;
        }
    }
    out
}

fn negative_id(ex: &Example, kind: NegativeKind) -> String {
    format!("{}#{}", ex.id, kind.id())
}

fn with_question(ex: &Example, kind: NegativeKind, question: Vec<String>) -> Example {
    Example {
        id: negative_id(ex, kind),
        document: ex.document.clone(),
        question,
        answer_span: None,
        entities: ex.entities.clone(),
    }
}

/// Pairs `examples[index]`'s document with the question of a uniformly
/// chosen other example.
pub fn make_question_swap<R: Rng>(examples: &[Example], index: usize, rng: &mut R) -> Result<Negative> {
    if examples.len() < 2 {
        return Err(Error::invalid("question swap needs at least two examples"));
    }
    let mut donor = rng.gen_range(0..examples.len() - 1);
    if donor >= index {
        donor += 1;
    }
    let ex = &examples[index];
    let d = &examples[donor];
    Ok(Negative {
        example: with_question(ex, NegativeKind::QuestionSwap, d.question.clone()),
        kind: NegativeKind::QuestionSwap,
        donor: Some(d.id.clone()),
        replaced: None,
    })
}

fn entity_swap<R: Rng>(
    ex: &Example,
    kind: NegativeKind,
    candidates: impl Fn(&[String], &str) -> Vec<Vec<String>>,
    rng: &mut R,
) -> Option<Negative> {
    let options: Vec<(Vec<String>, Vec<Vec<String>>)> = question_entities(ex)
        .into_iter()
        .map(|(s, label)| {
            let c = candidates(&s, &label);
            (s, c)
        })
        .filter(|(_, c)| !c.is_empty())
        .collect();
    let (from, cands) = options.choose(rng)?;
    let to = cands.choose(rng)?.clone();
    let question = replace_all(&ex.question, from, &to);
    Some(Negative {
        example: with_question(ex, kind, question),
        kind,
        donor: None,
        replaced: Some((from.clone(), to)),
    })
}

/// Replaces a question entity with a same-type inventory entity that does
/// not occur in the document. `None` when no such replacement exists.
pub fn make_inter_doc_entity_swap<R: Rng>(
    ex: &Example,
    inventory: &EntityInventory,
    rng: &mut R,
) -> Option<Negative> {
    entity_swap(
        ex,
        NegativeKind::InterDocEntitySwap,
        |surface, label| {
            inventory
                .get(label)
                .map(|all| {
                    all.iter()
                        .filter(|s| s.as_slice() != surface && !contains_run(&ex.document, s))
                        .cloned()
                        .collect()
                })
                .unwrap_or_default()
        },
        rng,
    )
}

/// Replaces a question entity with a different entity of the same
/// document. `None` when the document has fewer than two distinct entities
/// or the question mentions none of them.
pub fn make_intra_doc_entity_swap<R: Rng>(ex: &Example, rng: &mut R) -> Option<Negative> {
    let mut surfaces: Vec<Vec<String>> = Vec::new();
    for (s, _) in document_entities(ex) {
        if !surfaces.contains(&s) {
            surfaces.push(s);
        }
    }
    if surfaces.len() < 2 {
        return None;
    }
    entity_swap(
        ex,
        NegativeKind::IntraDocEntitySwap,
        |surface, _| surfaces.iter().filter(|s| s.as_slice() != surface).cloned().collect(),
        rng,
    )
}

/// Gold pairs followed by their negatives, with per-kind skip counts.
#[derive(Debug, Clone, Default)]
pub struct NegativeSet {
    pub positives: Vec<Example>,
    pub negatives: Vec<Negative>,
    pub skipped: BTreeMap<NegativeKind, usize>,
}

impl NegativeSet {
    /// Records in output order: each gold pair then its negatives.
    pub fn records(&self) -> Vec<(Example, RecordExtras)> {
        let mut by_source: BTreeMap<&str, Vec<&Negative>> = BTreeMap::new();
        for n in &self.negatives {
            let src = n.example.id.rsplit_once('#').map_or("", |p| p.0);
            by_source.entry(src).or_default().push(n);
        }
        let mut out = Vec::new();
        for p in &self.positives {
            out.push((
                p.clone(),
                RecordExtras {
                    label: Some("positive".into()),
                    negative_kind: None,
                },
            ));
            for n in by_source.get(p.id.as_str()).into_iter().flatten() {
                out.push((
                    n.example.clone(),
                    RecordExtras {
                        label: Some("negative".into()),
                        negative_kind: Some(n.kind.id().into()),
                    },
                ));
            }
        }
        out
    }
}

/// One negative of each kind per example where eligible.
pub fn make_negatives(examples: &[Example], seed: u64) -> Result<NegativeSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inventory = entity_inventory(examples);
    let mut set = NegativeSet {
        positives: examples.to_vec(),
        ..NegativeSet::default()
    };
    for k in NegativeKind::ALL {
        set.skipped.insert(k, 0);
    }
    for (i, ex) in examples.iter().enumerate() {
        set.negatives.push(make_question_swap(examples, i, &mut rng)?);
        match make_inter_doc_entity_swap(ex, &inventory, &mut rng) {
            Some(n) => set.negatives.push(n),
            None => *set.skipped.get_mut(&NegativeKind::InterDocEntitySwap).unwrap() += 1,
        }
        match make_intra_doc_entity_swap(ex, &mut rng) {
            Some(n) => set.negatives.push(n),
            None => *set.skipped.get_mut(&NegativeKind::IntraDocEntitySwap).unwrap() += 1,
        }
    }
    Ok(set)
}

/// Writes the labeled pair file: a corpus header, then records carrying
/// `label` and `negative_kind`.
pub fn write_labeled_pairs(path: impl AsRef<Path>, header: &CorpusHeader, set: &NegativeSet) -> Result<()> {
    let mut text = header_line(header);
    text.push('\n');
    for (ex, extras) in set.records() {
        text.push_str(&record_line(&ex, &extras));
        text.push('\n');
    }
    write_text(path.as_ref(), &text)
}

/// Reads a labeled pair file into `(positives, negatives)`.
pub fn load_labeled_pairs(path: impl AsRef<Path>) -> Result<(Vec<Example>, Vec<Example>)> {
    let path = path.as_ref();
    let (_, records) = parse_records(path, &read_text(path)?)?;
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (line, ex, extras) in records {
        match extras.label.as_deref() {
            Some("positive") => pos.push(ex),
            Some("negative") => neg.push(ex),
            other => {
                return Err(Error::Ingestion {
                    path: path.display().to_string(),
                    line,
                    message: format!("field `label` must be positive or negative, found {other:?}"),
                })
            }
        }
    }
    Ok((pos, neg))
}
