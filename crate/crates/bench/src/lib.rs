//! Shared fixtures for the criterion benchmarks.

use treespec::harness::ingest_text;
use treespec::{distill_interpolate, train_ngram, Context, NGramModel, Vocabulary};

const CORPUS: &str = include_str!("../../core/data/captions.txt");

/// Target and base draft trained on the bundled caption corpus.
pub struct Fixture {
    pub vocab: Vocabulary,
    pub target: NGramModel,
    pub base: NGramModel,
    pub prompts: Vec<Context>,
}

impl Fixture {
    pub fn new() -> Self {
        let corpus = ingest_text(CORPUS);
        let target = train_ngram(&corpus.vocab, &corpus.tokens, 4, 0.01).expect("target trains");
        let base = train_ngram(&corpus.vocab, &corpus.tokens, 2, 0.5).expect("draft trains");
        let prompts = ["A dog ", "Two children play", "The old", "A woman in a red"]
            .iter()
            .map(|p| Context::from_text(&corpus.vocab, p).expect("prompt encodes"))
            .collect();
        Fixture {
            vocab: corpus.vocab,
            target,
            base,
            prompts,
        }
    }

    /// Draft blended toward the target by `lambda`.
    pub fn draft(&self, lambda: f64) -> impl treespec::LanguageModel + '_ {
        distill_interpolate(&self.target, &self.base, lambda).expect("lambda in range")
    }
}

impl Default for Fixture {
    fn default() -> Self {
        Self::new()
    }
}
