use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tokenization schemes selectable by id in corpus headers and configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum TokenizerKind {
    /// Split on whitespace, then split every non-alphanumeric character into
    /// its own token. Id `ws-punct`.
    #[default]
    #[serde(rename = "ws-punct")]
    WhitespacePunct,
    /// Split on whitespace only. Id `whitespace`.
    #[serde(rename = "whitespace")]
    Whitespace,
}

impl TokenizerKind {
    pub fn id(self) -> &'static str {
        match self {
            TokenizerKind::WhitespacePunct => "ws-punct",
            TokenizerKind::Whitespace => "whitespace",
        }
    }
}

impl FromStr for TokenizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ws-punct" => Ok(TokenizerKind::WhitespacePunct),
            "whitespace" => Ok(TokenizerKind::Whitespace),
            other => Err(Error::Config(format!("unknown tokenizer id `{other}`"))),
        }
    }
}

impl fmt::Display for TokenizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// Tokenizes `text`. Whitespace runs are the only thing lost, so
/// `tokenize(detokenize(tokenize(s))) == tokenize(s)`.
pub fn tokenize(text: &str, kind: TokenizerKind) -> Result<Vec<String>> {
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        match kind {
            TokenizerKind::Whitespace => tokens.push(word.to_string()),
            TokenizerKind::WhitespacePunct => split_punct(word, &mut tokens),
        }
    }
    if tokens.is_empty() {
        return Err(Error::invalid("cannot tokenize empty text"));
    }
    Ok(tokens)
}

fn split_punct(word: &str, out: &mut Vec<String>) {
    let mut current = String::new();
    for c in word.chars() {
        if c.is_alphanumeric() {
            current.push(c);
        } else {
            if !current.is_empty() {
                out.push(std::mem::take(&mut current));
            }
            out.push(c.to_string());
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
}

/// Joins tokens with single spaces.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(t.as_ref());
    }
    out
}
