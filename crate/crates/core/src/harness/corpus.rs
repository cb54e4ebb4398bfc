use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::lm::{Context, TokenId, Vocabulary};

/// A character-tokenized text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    pub vocab: Vocabulary,
    pub tokens: Vec<TokenId>,
}

/// Reads a UTF-8 file as a character stream.
pub fn ingest_corpus(path: &Path) -> Result<Corpus> {
    let text = read_text(path)?;
    if text.is_empty() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: "corpus is empty".into(),
        });
    }
    Ok(ingest_text(&text))
}

pub fn ingest_text(text: &str) -> Corpus {
    let vocab = Vocabulary::from_chars(text);
    let tokens = vocab
        .encode(text)
        .expect("vocabulary built from the same text");
    Corpus { vocab, tokens }
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    String::from_utf8(bytes).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: format!("not valid UTF-8: {e}"),
    })
}

/// Splits `tokens` into a training prefix and a held-out suffix holding
/// `holdout_fraction` of the tokens.
pub fn split_holdout(tokens: &[TokenId], holdout_fraction: f64) -> (&[TokenId], &[TokenId]) {
    let held = ((tokens.len() as f64) * holdout_fraction).round() as usize;
    tokens.split_at(tokens.len() - held.min(tokens.len()))
}

/// `count` contexts of `<bos>` plus a span of `min_len..=max_len` tokens
/// taken from random offsets in `region`.
pub fn sample_contexts<R: Rng>(
    vocab: &Vocabulary,
    region: &[TokenId],
    count: usize,
    min_len: usize,
    max_len: usize,
    rng: &mut R,
) -> Result<Vec<Context>> {
    if min_len > max_len {
        return Err(Error::invalid("span min length exceeds max length"));
    }
    if region.len() < max_len {
        return Err(Error::invalid(format!(
            "region of {} tokens is too short for spans of {max_len}",
            region.len()
        )));
    }
    (0..count)
        .map(|_| {
            let len = rng.gen_range(min_len..=max_len);
            let start = rng.gen_range(0..=region.len() - len);
            Context::with_bos(vocab, &region[start..start + len])
        })
        .collect()
}
