//! Token space, distributions, the model interface, and n-gram surrogates.

mod context;
mod distribution;
mod interpolate;
mod model;
pub mod ngram;
mod vocab;

pub use context::Context;
pub use distribution::{
    entropy, greedy_token, kl_divergence, Distribution, KL_EPSILON, MASS_TOLERANCE,
};
pub use interpolate::{distill_interpolate, Interpolated};
pub use model::{next_distribution, AdversarialModel, HashedModel, LanguageModel, OneHotModel};
pub use ngram::{train_ngram, NGramModel};
pub use vocab::{TokenId, Vocabulary, BOS_TOKEN, EOS_TOKEN};
