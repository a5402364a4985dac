//! Examples, tokenization, vocabulary and dataset files.

mod dataset;
mod tokenize;
mod vocab;

pub use dataset::{
    corpus_to_string, header_line, load_dataset, read_text, record_line, write_dataset,
    write_text, Corpus, CorpusHeader, EntitySpan, Example, RecordExtras, Split,
};
pub(crate) use dataset::parse_records;
pub use tokenize::{detokenize, tokenize, TokenizerKind};
pub use vocab::{build_vocab, vocab_from_sequences, Vocabulary, BOS, EOS, PAD, RESERVED, UNK};

/// Documents longer than this are truncated from the right before encoding.
pub const MAX_INPUT_LEN: usize = 256;

/// The first `MAX_INPUT_LEN` tokens of `document`.
pub fn truncate_document(document: &[String]) -> &[String] {
    &document[..document.len().min(MAX_INPUT_LEN)]
}

/// Whether `needle` occurs as a contiguous token run in `haystack`.
pub fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}
