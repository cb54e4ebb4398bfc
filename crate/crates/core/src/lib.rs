//! Lossless speculative decoding with dynamically shaped draft trees.
//!
//! A cheap draft model grows a token tree whose width follows its own
//! confidence; the target model walks the tree greedily and keeps the
//! longest agreeing path plus one token of its own. The emitted sequence is
//! always identical to target-only greedy decoding.
//!
//! - [`lm`]: vocabularies, distributions, the [`LanguageModel`] trait and
//!   n-gram surrogate models.
//! - [`tree`]: entropy-adaptive tree expansion and top-n pruning.
//! - [`verify`]: tree verification and the decode loop.
//! - [`metrics`]: acceptance length, KL estimates, cost model.
//! - [`harness`]: corpora, experiment configs, benchmark matrix, reports.

pub mod error;
pub mod harness;
pub mod lm;
pub mod metrics;
pub mod tree;
pub mod verify;

pub use error::{Error, Result};
pub use lm::{
    distill_interpolate, entropy, greedy_token, kl_divergence, train_ngram, Context, Distribution,
    LanguageModel, NGramModel, TokenId, Vocabulary,
};
pub use metrics::{
    estimate_kl, mean_acceptance, predicted_speedup, CostModel, DecodeStats, KlDirection,
};
pub use tree::{
    branch_width, build_tree, expand_tree, prune_tree, BranchPolicy, SpecNode, SpecTree,
};
pub use verify::{
    greedy_decode, speculative_decode, verify_tree, verify_tree_batched, DecodeOutput,
    VerificationResult,
};
