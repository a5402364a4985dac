use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tokenize::{detokenize, tokenize, TokenizerKind};
use crate::error::{Error, Result};

/// A typed entity mention over document tokens, `start..=end`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub label: String,
}

/// One document with its ground-truth question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub id: String,
    pub document: Vec<String>,
    pub question: Vec<String>,
    /// Inclusive token span into `document`.
    pub answer_span: Option<(usize, usize)>,
    pub entities: Vec<EntitySpan>,
}

impl Example {
    pub fn entity_tokens(&self, e: &EntitySpan) -> &[String] {
        &self.document[e.start..=e.end]
    }

    pub fn answer_tokens(&self) -> Option<&[String]> {
        self.answer_span.map(|(s, e)| &self.document[s..=e])
    }

    /// Checks the structural invariants; `labels` is the declared entity label set.
    pub fn validate(&self, labels: &[String]) -> std::result::Result<(), String> {
        let n = self.document.len();
        if n == 0 {
            return Err("document is empty".into());
        }
        if self.question.is_empty() {
            return Err("question is empty".into());
        }
        if let Some((s, e)) = self.answer_span {
            if s > e || e >= n {
                return Err(format!("answer span ({s}, {e}) out of bounds for {n} tokens"));
            }
        }
        let mut spans: Vec<&EntitySpan> = self.entities.iter().collect();
        spans.sort_by_key(|e| (e.start, e.end));
        for e in &spans {
            if e.start > e.end || e.end >= n {
                return Err(format!(
                    "entity span ({}, {}) out of bounds for {n} tokens",
                    e.start, e.end
                ));
            }
            if !labels.iter().any(|l| *l == e.label) {
                return Err(format!("entity type `{}` not declared in header", e.label));
            }
        }
        for w in spans.windows(2) {
            if w[1].start <= w[0].end {
                return Err(format!(
                    "entity spans ({}, {}) and ({}, {}) overlap",
                    w[0].start, w[0].end, w[1].start, w[1].end
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct CorpusHeader {
    pub tokenizer: TokenizerKind,
    pub entity_types: Vec<String>,
    #[serde(default)]
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub header: CorpusHeader,
    pub examples: Vec<Example>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

#[derive(Deserialize)]
struct HeaderLine {
    header: CorpusHeader,
}

#[derive(Serialize)]
struct HeaderLineRef<'a> {
    header: &'a CorpusHeader,
}

/// Keys beyond the core record that labeled pair files carry.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordExtras {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub negative_kind: Option<String>,
}

#[derive(Deserialize)]
struct RawRecord {
    id: Option<String>,
    document: Option<String>,
    question: Option<String>,
    answer_start: Option<usize>,
    answer_end: Option<usize>,
    #[serde(default)]
    entities: Vec<EntitySpan>,
    #[serde(flatten)]
    extras: RecordExtras,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    id: &'a str,
    document: String,
    question: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    answer_start: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    answer_end: Option<usize>,
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    entities: &'a [EntitySpan],
    #[serde(flatten)]
    extras: &'a RecordExtras,
}

/// Serializes one record line (no trailing newline).
pub fn record_line(example: &Example, extras: &RecordExtras) -> String {
    let out = RecordOut {
        id: &example.id,
        document: detokenize(&example.document),
        question: detokenize(&example.question),
        answer_start: example.answer_span.map(|s| s.0),
        answer_end: example.answer_span.map(|s| s.1),
        entities: &example.entities,
        extras,
    };
    serde_json::to_string(&out).expect("record serializes")
}

pub fn header_line(header: &CorpusHeader) -> String {
    serde_json::to_string(&HeaderLineRef { header }).expect("header serializes")
}

/// Parses a line-delimited file into its header and `(line, record, extras)`
/// triples, lines counted from 1.
pub(crate) fn parse_records(
    path: &Path,
    text: &str,
) -> Result<(CorpusHeader, Vec<(usize, Example, RecordExtras)>)> {
    let shown = path.display().to_string();
    let err = |line: usize, message: String| Error::Ingestion {
        path: shown.clone(),
        line,
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());
    let Some((hline, htext)) = lines.next() else {
        return Ok((CorpusHeader::default(), Vec::new()));
    };
    let header: HeaderLine = serde_json::from_str(htext)
        .map_err(|e| err(hline, format!("expected corpus header line: {e}")))?;
    let header = header.header;

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (lineno, line) in lines {
        let raw: RawRecord =
            serde_json::from_str(line).map_err(|e| err(lineno, format!("malformed record: {e}")))?;
        let id = raw.id.ok_or_else(|| err(lineno, "missing required field `id`".into()))?;
        let document = raw
            .document
            .ok_or_else(|| err(lineno, "missing required field `document`".into()))?;
        let question = raw
            .question
            .ok_or_else(|| err(lineno, "missing required field `question`".into()))?;
        let answer_span = match (raw.answer_start, raw.answer_end) {
            (Some(s), Some(e)) => Some((s, e)),
            (None, None) => None,
            (Some(_), None) => return Err(err(lineno, "missing required field `answer_end`".into())),
            (None, Some(_)) => {
                return Err(err(lineno, "missing required field `answer_start`".into()))
            }
        };
        let document = tokenize(&document, header.tokenizer)
            .map_err(|e| err(lineno, format!("field `document`: {e}")))?;
        let question = tokenize(&question, header.tokenizer)
            .map_err(|e| err(lineno, format!("field `question`: {e}")))?;
        let example = Example {
            id,
            document,
            question,
            answer_span,
            entities: raw.entities,
        };
        example
            .validate(&header.entity_types)
            .map_err(|m| err(lineno, m))?;
        if !seen.insert(example.id.clone()) {
            return Err(err(lineno, format!("duplicate id `{}`", example.id)));
        }
        records.push((lineno, example, raw.extras));
    }
    Ok((header, records))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a corpus file: one header line, then one record per line.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let (header, records) = parse_records(path, &text)?;
    Ok(Corpus {
        header,
        examples: records.into_iter().map(|(_, e, _)| e).collect(),
    })
}

pub fn corpus_to_string(corpus: &Corpus) -> String {
    let mut out = header_line(&corpus.header);
    out.push('\n');
    let none = RecordExtras::default();
    for ex in &corpus.examples {
        out.push_str(&record_line(ex, &none));
        out.push('\n');
    }
    out
}

pub fn write_dataset(path: impl AsRef<Path>, corpus: &Corpus) -> Result<()> {
    write_text(path.as_ref(), &corpus_to_string(corpus))
}
