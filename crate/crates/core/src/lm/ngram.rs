//! Additively smoothed n-gram models.
//!
//! An order-`k` model conditions on the last `k - 1` context tokens. A
//! context suffix never seen in training backs off to the smoothed unigram
//! row. Row probabilities are `(count + alpha) / (row_total + alpha * V)`.
//!
//! # Persistence format
//!
//! Models are stored as a single JSON document:
//!
//! ```text
//! {
//!   "format": "treespec-ngram",
//!   "version": 1,
//!   "order": 3,
//!   "smoothing_alpha": 0.01,
//!   "vocab": { "tokens": [...], "bos_id": 0, "eos_id": 1 },
//!   "unigram": [c0, c1, ...],                       // dense counts, length V
//!   "rows": [ { "context": [t, ...], "counts": [[token, count], ...] }, ... ]
//! }
//! ```
//!
//! `rows` are sorted by context and `counts` by token id, so saving is
//! deterministic; floats round-trip exactly.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::context::check_tokens;
use crate::lm::{Distribution, LanguageModel, TokenId, Vocabulary};

pub const FORMAT_NAME: &str = "treespec-ngram";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
struct Row {
    counts: Vec<u64>,
    total: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NGramModel {
    vocab: Vocabulary,
    order: usize,
    alpha: f64,
    unigram: Row,
    rows: HashMap<Vec<TokenId>, Row>,
}

/// Counts `corpus` into an order-`order` model with additive smoothing `alpha`.
pub fn train_ngram(
    vocab: &Vocabulary,
    corpus: &[TokenId],
    order: usize,
    alpha: f64,
) -> Result<NGramModel> {
    if corpus.is_empty() {
        return Err(Error::invalid("cannot train on an empty corpus"));
    }
    if order < 1 {
        return Err(Error::invalid("n-gram order must be >= 1"));
    }
    if corpus.len() < order {
        return Err(Error::invalid(format!(
            "corpus length {} is shorter than order {order}",
            corpus.len()
        )));
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::invalid(format!(
            "smoothing alpha must be finite and >= 0, got {alpha}"
        )));
    }
    check_tokens(vocab, corpus)?;

    let v = vocab.size();
    let mut unigram = Row {
        counts: vec![0; v],
        total: 0,
    };
    for &t in corpus {
        unigram.counts[t as usize] += 1;
        unigram.total += 1;
    }

    let mut rows: HashMap<Vec<TokenId>, Row> = HashMap::new();
    if order > 1 {
        for window in corpus.windows(order) {
            let (ctx, next) = window.split_at(order - 1);
            let row = rows.entry(ctx.to_vec()).or_insert_with(|| Row {
                counts: vec![0; v],
                total: 0,
            });
            row.counts[next[0] as usize] += 1;
            row.total += 1;
        }
    }

    Ok(NGramModel {
        vocab: vocab.clone(),
        order,
        alpha,
        unigram,
        rows,
    })
}

impl NGramModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing_alpha(&self) -> f64 {
        self.alpha
    }

    /// Number of distinct observed context suffixes.
    pub fn context_count(&self) -> usize {
        self.rows.len()
    }

    fn row_for(&self, context: &[TokenId]) -> &Row {
        let k = self.order - 1;
        if k == 0 || context.len() < k {
            return &self.unigram;
        }
        self.rows
            .get(&context[context.len() - k..])
            .unwrap_or(&self.unigram)
    }

    fn row_distribution(&self, row: &Row) -> Distribution {
        let denom = row.total as f64 + self.alpha * self.vocab.size() as f64;
        let probs = row
            .counts
            .iter()
            .map(|&c| (c as f64 + self.alpha) / denom)
            .collect();
        Distribution::from_probs_unchecked(probs)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.to_stored())
            .map_err(|e| Error::invalid(format!("serializing model: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let stored: StoredModel = serde_json::from_str(text)
            .map_err(|e| Error::invalid(format!("parsing model: {e}")))?;
        Self::from_stored(stored)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    fn to_stored(&self) -> StoredModel {
        let mut rows: Vec<StoredRow> = self
            .rows
            .iter()
            .map(|(ctx, row)| StoredRow {
                context: ctx.clone(),
                counts: row
                    .counts
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(|(t, &c)| (t as TokenId, c))
                    .collect(),
            })
            .collect();
        rows.sort_by(|a, b| a.context.cmp(&b.context));
        StoredModel {
            format: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            order: self.order,
            smoothing_alpha: self.alpha,
            vocab: self.vocab.clone(),
            unigram: self.unigram.counts.clone(),
            rows,
        }
    }

    fn from_stored(stored: StoredModel) -> Result<Self> {
        if stored.format != FORMAT_NAME {
            return Err(Error::invalid(format!(
                "unknown model format {:?}",
                stored.format
            )));
        }
        if stored.version != FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported model version {}",
                stored.version
            )));
        }
        let vocab = Vocabulary::new(
            stored.vocab.tokens().to_vec(),
            stored.vocab.bos_id(),
            stored.vocab.eos_id(),
        )?;
        let v = vocab.size();
        if stored.order < 1 {
            return Err(Error::invalid("n-gram order must be >= 1"));
        }
        if !(stored.smoothing_alpha.is_finite() && stored.smoothing_alpha >= 0.0) {
            return Err(Error::invalid("smoothing alpha must be finite and >= 0"));
        }
        if stored.unigram.len() != v {
            return Err(Error::invalid(
                "unigram row length differs from vocabulary size",
            ));
        }
        let unigram = Row {
            total: stored.unigram.iter().sum(),
            counts: stored.unigram,
        };
        if unigram.total == 0 && stored.smoothing_alpha == 0.0 {
            return Err(Error::invalid("unigram row has no mass"));
        }
        let mut rows = HashMap::with_capacity(stored.rows.len());
        for r in stored.rows {
            if r.context.len() != stored.order - 1 {
                return Err(Error::invalid("row context length differs from order - 1"));
            }
            check_tokens(&vocab, &r.context)?;
            let mut counts = vec![0; v];
            for (t, c) in r.counts {
                check_tokens(&vocab, &[t])?;
                counts[t as usize] += c;
            }
            let total = counts.iter().sum();
            if total == 0 && stored.smoothing_alpha == 0.0 {
                return Err(Error::invalid("stored row has no mass"));
            }
            rows.insert(r.context, Row { counts, total });
        }
        Ok(Self {
            vocab,
            order: stored.order,
            alpha: stored.smoothing_alpha,
            unigram,
            rows,
        })
    }
}

impl LanguageModel for NGramModel {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn predict(&self, context: &[TokenId]) -> Result<Distribution> {
        Ok(self.row_distribution(self.row_for(context)))
    }
}

#[derive(Serialize, Deserialize)]
struct StoredModel {
    format: String,
    version: u32,
    order: usize,
    smoothing_alpha: f64,
    vocab: Vocabulary,
    unigram: Vec<u64>,
    rows: Vec<StoredRow>,
}

#[derive(Serialize, Deserialize)]
struct StoredRow {
    context: Vec<TokenId>,
    counts: Vec<(TokenId, u64)>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::greedy_token;

    fn encoded(text: &str) -> (Vocabulary, Vec<TokenId>) {
        let v = Vocabulary::from_chars(text);
        let ids = v.encode(text).unwrap();
        (v, ids)
    }

    #[test]
    fn unigram_hand_count() {
        let (v, ids) = encoded("aab");
        let m = train_ngram(&v, &ids, 1, 0.0).unwrap();
        let d = m.next_distribution(&[0, 2]).unwrap();
        let (a, b) = (v.id_of("a").unwrap(), v.id_of("b").unwrap());
        assert_eq!(d.prob(a), 2.0 / 3.0);
        assert_eq!(d.prob(b), 1.0 / 3.0);
        assert_eq!(d.prob(0), 0.0);
    }

    #[test]
    fn alternating_corpus_concentrates_on_successor() {
        // "ababababab": a->b 5 times, b->a 4 times; with alpha = 0.5, V = 4:
        // P(b | a) = 5.5 / 7, P(a | b) = 4.5 / 6.
        let (v, ids) = encoded("ababababab");
        let m = train_ngram(&v, &ids, 2, 0.5).unwrap();
        let (a, b) = (v.id_of("a").unwrap(), v.id_of("b").unwrap());
        let after_a = m.next_distribution(&[0, a]).unwrap();
        let after_b = m.next_distribution(&[0, a, b]).unwrap();
        assert!((after_a.prob(b) - 5.5 / 7.0).abs() < 1e-15);
        assert!((after_b.prob(a) - 4.5 / 6.0).abs() < 1e-15);
        assert_eq!(greedy_token(&after_a), b);
        assert_eq!(greedy_token(&after_b), a);
    }

    #[test]
    fn unseen_context_backs_off_to_smoothed_unigram() {
        // Corpus "aab" (a:2, b:1, N=3), V=4, alpha=1: unigram = [1,1,3,2]/7.
        let (v, ids) = encoded("aab");
        let m = train_ngram(&v, &ids, 2, 1.0).unwrap();
        let d = m.next_distribution(&[0]).unwrap();
        let expect = [1.0 / 7.0, 1.0 / 7.0, 3.0 / 7.0, 2.0 / 7.0];
        for (p, e) in d.probs().iter().zip(expect) {
            assert!((p - e).abs() < 1e-15);
        }
    }

    #[test]
    fn single_token_corpus_gives_one_hot_rows() {
        let (v, ids) = encoded("zzzzzz");
        for order in 1..=4 {
            let m = train_ngram(&v, &ids, order, 0.0).unwrap();
            let d = m.next_distribution(&[0, 2, 2, 2, 2]).unwrap();
            assert_eq!(d.prob(2), 1.0);
        }
    }

    #[test]
    fn huge_alpha_is_nearly_uniform() {
        let (v, ids) = encoded("the quick brown fox jumps over the lazy dog");
        let m = train_ngram(&v, &ids, 3, 1e6).unwrap();
        let d = m
            .next_distribution(
                &v.encode("the")
                    .map(|mut t| {
                        t.insert(0, 0);
                        t
                    })
                    .unwrap(),
            )
            .unwrap();
        let max = d.probs().iter().cloned().fold(f64::MIN, f64::max);
        let min = d.probs().iter().cloned().fold(f64::MAX, f64::min);
        assert!(max - min < 0.01);
    }

    #[test]
    fn training_errors() {
        let v = Vocabulary::synthetic(4).unwrap();
        assert!(train_ngram(&v, &[], 1, 0.0).is_err());
        assert!(train_ngram(&v, &[2], 2, 0.0).is_err());
        assert!(train_ngram(&v, &[2, 3], 0, 0.0).is_err());
        assert!(train_ngram(&v, &[2, 3], 1, -1.0).is_err());
        assert!(train_ngram(&v, &[2, 9], 1, 0.0).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let (v, ids) = encoded("speculative decoding of speculative trees");
        let m = train_ngram(&v, &ids, 3, 0.1 + 0.2).unwrap();
        let text = m.to_json().unwrap();
        let back = NGramModel::from_json(&text).unwrap();
        assert_eq!(m, back);
        assert_eq!(text, back.to_json().unwrap());
    }

    #[test]
    fn rejects_foreign_format() {
        let (v, ids) = encoded("abc");
        let text = train_ngram(&v, &ids, 2, 0.0).unwrap().to_json().unwrap();
        let bad = text.replace("\"version\": 1", "\"version\": 9");
        assert!(NGramModel::from_json(&bad).is_err());
    }
}
