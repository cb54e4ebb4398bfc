use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::TokenId;

/// Allowed deviation of a distribution's mass from 1.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Floor added to `q` before taking logs in [`kl_divergence`].
pub const KL_EPSILON: f64 = 1e-10;

/// A normalized probability vector over a vocabulary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    /// Wraps `probs`, checking that every entry is finite and non-negative
    /// and that the total mass is within [`MASS_TOLERANCE`] of 1.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        validate(&probs)?;
        Ok(Self { probs })
    }

    /// Normalizes non-negative scores.
    pub fn from_scores(scores: &[f64]) -> Result<Self> {
        if scores.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::invalid("scores must be finite and non-negative"));
        }
        let total: f64 = scores.iter().sum();
        if total <= 0.0 {
            return Err(Error::invalid("scores must have positive total mass"));
        }
        Self::new(scores.iter().map(|s| s / total).collect())
    }

    pub fn one_hot(size: usize, hot: TokenId) -> Result<Self> {
        if hot as usize >= size {
            return Err(Error::invalid(format!(
                "one-hot index {hot} out of range for size {size}"
            )));
        }
        let mut probs = vec![0.0; size];
        probs[hot as usize] = 1.0;
        Ok(Self { probs })
    }

    pub fn uniform(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::invalid("uniform distribution over empty vocabulary"));
        }
        Ok(Self {
            probs: vec![1.0 / size as f64; size],
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, token: TokenId) -> f64 {
        self.probs.get(token as usize).copied().unwrap_or(0.0)
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    /// Number of tokens with non-zero probability.
    pub fn support_size(&self) -> usize {
        self.probs.iter().filter(|&&p| p > 0.0).count()
    }

    /// The `k` most probable tokens with non-zero probability, ordered by
    /// descending probability and then by ascending token id.
    pub fn top_k(&self, k: usize) -> Vec<(TokenId, f64)> {
        let mut ranked: Vec<(TokenId, f64)> = self
            .probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(i, &p)| (i as TokenId, p))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(k);
        ranked
    }

    pub(crate) fn from_probs_unchecked(probs: Vec<f64>) -> Self {
        debug_assert!(validate(&probs).is_ok(), "invalid distribution {probs:?}");
        Self { probs }
    }
}

pub(crate) fn validate(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::invalid("distribution is empty"));
    }
    if let Some((i, p)) = probs
        .iter()
        .enumerate()
        .find(|(_, p)| !p.is_finite() || **p < 0.0)
    {
        return Err(Error::invalid(format!("probability {i} is {p}")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > MASS_TOLERANCE {
        return Err(Error::invalid(format!(
            "distribution mass {total} is not within {MASS_TOLERANCE} of 1"
        )));
    }
    Ok(())
}

/// Argmax with ties resolved to the lowest token id.
pub fn greedy_token(d: &Distribution) -> TokenId {
    let mut best = 0;
    for (i, &p) in d.probs.iter().enumerate().skip(1) {
        if p > d.probs[best] {
            best = i;
        }
    }
    best as TokenId
}

/// Shannon entropy in nats.
pub fn entropy(d: &Distribution) -> f64 {
    -d.probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// `KL(p || q)` in nats with `q` floored to `(q + eps) / (1 + eps * V)`.
///
/// Bit-identical inputs return exactly 0 without applying the floor.
pub fn kl_divergence(p: &Distribution, q: &Distribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::invalid(format!(
            "distribution lengths differ: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    if p.probs == q.probs {
        return Ok(0.0);
    }
    let norm = 1.0 + KL_EPSILON * q.len() as f64;
    let kl: f64 = p
        .probs
        .iter()
        .zip(&q.probs)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / ((qi + KL_EPSILON) / norm)).ln())
        .sum();
    // Rounding can push a near-zero divergence slightly negative.
    Ok(kl.max(0.0))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::LN_2;

    use super::*;

    fn dist(p: &[f64]) -> Distribution {
        Distribution::new(p.to_vec()).unwrap()
    }

    #[test]
    fn rejects_invalid_probs() {
        assert!(Distribution::new(vec![]).is_err());
        assert!(Distribution::new(vec![0.5, 0.6]).is_err());
        assert!(Distribution::new(vec![1.5, -0.5]).is_err());
        assert!(Distribution::new(vec![f64::NAN, 1.0]).is_err());
        assert!(Distribution::from_scores(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn greedy_examples() {
        assert_eq!(greedy_token(&dist(&[0.1, 0.7, 0.2])), 1);
        assert_eq!(greedy_token(&dist(&[0.5, 0.5])), 0);
        assert_eq!(greedy_token(&Distribution::uniform(16).unwrap()), 0);
        assert_eq!(greedy_token(&dist(&[0.2, 0.4, 0.4])), 1);
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&Distribution::one_hot(5, 3).unwrap()), 0.0);
        let h = entropy(&Distribution::uniform(16).unwrap());
        assert!((h - 16f64.ln()).abs() < 1e-9);
        assert!((h - 2.772588722).abs() < 1e-9);
        assert!((entropy(&dist(&[0.5, 0.5, 0.0, 0.0])) - LN_2).abs() < 1e-9);
    }

    #[test]
    fn kl_examples() {
        let p = dist(&[0.2, 0.3, 0.5]);
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        let kl = kl_divergence(&dist(&[1.0, 0.0]), &dist(&[0.5, 0.5])).unwrap();
        assert!((kl - LN_2).abs() <= 1e-9, "{kl}");
        assert!(kl_divergence(&dist(&[1.0]), &dist(&[0.5, 0.5])).is_err());
    }

    #[test]
    fn kl_with_zero_in_q_is_finite() {
        let kl = kl_divergence(&dist(&[0.5, 0.5]), &dist(&[1.0, 0.0])).unwrap();
        assert!(kl.is_finite() && kl > 10.0);
    }

    #[test]
    fn top_k_skips_zero_mass_and_breaks_ties_low() {
        let d = dist(&[0.25, 0.0, 0.25, 0.5]);
        assert_eq!(d.top_k(10), vec![(3, 0.5), (0, 0.25), (2, 0.25)]);
        assert_eq!(d.top_k(1), vec![(3, 0.5)]);
        assert_eq!(d.support_size(), 3);
    }
}
