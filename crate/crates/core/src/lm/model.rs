use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lm::context::check_tokens;
use crate::lm::{greedy_token, Context, Distribution, TokenId, Vocabulary};

/// A next-token predictor over a fixed vocabulary.
///
/// Implementations must be pure: the same context always yields a
/// bit-identical distribution.
pub trait LanguageModel: Send + Sync {
    fn vocab(&self) -> &Vocabulary;

    /// Distribution over the next token. Callers go through
    /// [`LanguageModel::next_distribution`], which validates `context` first.
    fn predict(&self, context: &[TokenId]) -> Result<Distribution>;

    fn next_distribution(&self, context: &[TokenId]) -> Result<Distribution> {
        let vocab = self.vocab();
        check_tokens(vocab, context)?;
        if context.last() == Some(&vocab.eos_id()) {
            return Err(Error::invalid("context already ends in eos"));
        }
        let dist = self.predict(context)?;
        debug_assert_eq!(dist.len(), vocab.size());
        debug_assert!(super::distribution::validate(dist.probs()).is_ok());
        Ok(dist)
    }
}

/// Free-function form of [`LanguageModel::next_distribution`] over a checked [`Context`].
pub fn next_distribution<M: LanguageModel + ?Sized>(
    model: &M,
    ctx: &Context,
) -> Result<Distribution> {
    model.next_distribution(ctx.tokens())
}

impl<M: LanguageModel + ?Sized> LanguageModel for &M {
    fn vocab(&self) -> &Vocabulary {
        (**self).vocab()
    }
    fn predict(&self, context: &[TokenId]) -> Result<Distribution> {
        (**self).predict(context)
    }
}

impl<M: LanguageModel + ?Sized> LanguageModel for Arc<M> {
    fn vocab(&self) -> &Vocabulary {
        (**self).vocab()
    }
    fn predict(&self, context: &[TokenId]) -> Result<Distribution> {
        (**self).predict(context)
    }
}

impl<M: LanguageModel + ?Sized> LanguageModel for Box<M> {
    fn vocab(&self) -> &Vocabulary {
        (**self).vocab()
    }
    fn predict(&self, context: &[TokenId]) -> Result<Distribution> {
        (**self).predict(context)
    }
}

/// Always predicts the same token with probability 1.
#[derive(Clone, Debug)]
pub struct OneHotModel {
    vocab: Vocabulary,
    token: TokenId,
}

impl OneHotModel {
    pub fn new(vocab: Vocabulary, token: TokenId) -> Result<Self> {
        check_tokens(&vocab, &[token])?;
        Ok(Self { vocab, token })
    }
}

impl LanguageModel for OneHotModel {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }
    fn predict(&self, _context: &[TokenId]) -> Result<Distribution> {
        Distribution::one_hot(self.vocab.size(), self.token)
    }
}

/// Pseudo-random model whose distribution is a fixed function of a seed and
/// the last `window` context tokens.
///
/// `sharpness` controls peakedness: scores are `u^sharpness` for uniform
/// draws `u`, so 0 gives a uniform row and large values approach one-hot.
/// `<bos>` is never predicted; `<eos>` gets its score scaled by `eos_weight`.
#[derive(Clone, Debug)]
pub struct HashedModel {
    vocab: Vocabulary,
    seed: u64,
    window: usize,
    sharpness: f64,
    eos_weight: f64,
}

impl HashedModel {
    pub fn new(vocab: Vocabulary, seed: u64, window: usize, sharpness: f64) -> Result<Self> {
        if vocab.size() < 3 {
            return Err(Error::invalid(
                "hashed model needs a token besides bos and eos",
            ));
        }
        if !(sharpness.is_finite() && sharpness >= 0.0) {
            return Err(Error::invalid(format!(
                "sharpness must be >= 0, got {sharpness}"
            )));
        }
        Ok(Self {
            vocab,
            seed,
            window,
            sharpness,
            eos_weight: 1.0,
        })
    }

    pub fn with_eos_weight(mut self, weight: f64) -> Self {
        self.eos_weight = weight.max(0.0);
        self
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

impl LanguageModel for HashedModel {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn predict(&self, context: &[TokenId]) -> Result<Distribution> {
        let start = context.len().saturating_sub(self.window);
        let key = context[start..]
            .iter()
            .fold(splitmix64(self.seed), |h, &t| splitmix64(h ^ u64::from(t)));
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let scores: Vec<f64> = (0..self.vocab.size() as TokenId)
            .map(|t| {
                let u: f64 = rng.gen_range(1e-3..1.0);
                let s = u.powf(self.sharpness);
                if t == self.vocab.bos_id() {
                    0.0
                } else if t == self.vocab.eos_id() {
                    s * self.eos_weight
                } else {
                    s
                }
            })
            .collect();
        Distribution::from_scores(&scores)
    }
}

/// Wraps a model and removes its greedy token from every distribution, so
/// the wrapper never proposes what the inner model would pick.
#[derive(Clone, Debug)]
pub struct AdversarialModel<M> {
    inner: M,
}

impl<M: LanguageModel> AdversarialModel<M> {
    pub fn new(inner: M) -> Self {
        Self { inner }
    }
}

impl<M: LanguageModel> LanguageModel for AdversarialModel<M> {
    fn vocab(&self) -> &Vocabulary {
        self.inner.vocab()
    }

    fn predict(&self, context: &[TokenId]) -> Result<Distribution> {
        let dist = self.inner.predict(context)?;
        let banned = greedy_token(&dist) as usize;
        let mut scores = dist.into_probs();
        scores[banned] = 0.0;
        if scores.iter().all(|&s| s == 0.0) {
            scores.iter_mut().for_each(|s| *s = 1.0);
            scores[banned] = 0.0;
        }
        Distribution::from_scores(&scores)
    }
}
