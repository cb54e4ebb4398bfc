use crate::error::{Error, Result};
use crate::lm::{Distribution, LanguageModel, TokenId, Vocabulary};

/// Convex blend `(1 - lambda) * base + lambda * target` of two models.
///
/// Stands in for distilling a draft toward its target: `lambda = 0` is the
/// untouched base draft, `lambda = 1` reproduces the target exactly.
#[derive(Clone, Debug)]
pub struct Interpolated<T, B> {
    target: T,
    base: B,
    lambda: f64,
}

pub fn distill_interpolate<T, B>(target: T, base: B, lambda: f64) -> Result<Interpolated<T, B>>
where
    T: LanguageModel,
    B: LanguageModel,
{
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!(
            "lambda must lie in [0, 1], got {lambda}"
        )));
    }
    if target.vocab() != base.vocab() {
        return Err(Error::invalid(
            "target and draft base use different vocabularies",
        ));
    }
    Ok(Interpolated {
        target,
        base,
        lambda,
    })
}

impl<T, B> Interpolated<T, B> {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl<T: LanguageModel, B: LanguageModel> LanguageModel for Interpolated<T, B> {
    fn vocab(&self) -> &Vocabulary {
        self.target.vocab()
    }

    fn predict(&self, context: &[TokenId]) -> Result<Distribution> {
        if self.lambda == 1.0 {
            return self.target.predict(context);
        }
        if self.lambda == 0.0 {
            return self.base.predict(context);
        }
        let t = self.target.predict(context)?;
        let b = self.base.predict(context)?;
        let probs = b
            .probs()
            .iter()
            .zip(t.probs())
            .map(|(&pb, &pt)| (1.0 - self.lambda) * pb + self.lambda * pt)
            .collect();
        Distribution::new(probs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{kl_divergence, train_ngram};

    struct Fixed(Vocabulary, Vec<f64>);

    impl LanguageModel for Fixed {
        fn vocab(&self) -> &Vocabulary {
            &self.0
        }
        fn predict(&self, _: &[TokenId]) -> Result<Distribution> {
            Distribution::new(self.1.clone())
        }
    }

    #[test]
    fn half_blend_is_arithmetic_mean() {
        let v = Vocabulary::synthetic(2).unwrap();
        let m = distill_interpolate(
            Fixed(v.clone(), vec![0.2, 0.8]),
            Fixed(v, vec![0.6, 0.4]),
            0.5,
        )
        .unwrap();
        let d = m.next_distribution(&[0]).unwrap();
        assert!((d.probs()[0] - 0.4).abs() < 1e-15);
        assert!((d.probs()[1] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn endpoints_reproduce_inputs() {
        let text: Vec<TokenId> = "abcabcaabbcc"
            .bytes()
            .map(|b| (b - b'a' + 2) as TokenId)
            .collect();
        let v = Vocabulary::synthetic(5).unwrap();
        let target = train_ngram(&v, &text, 3, 0.1).unwrap();
        let base = train_ngram(&v, &text, 1, 1.0).unwrap();
        let ctx = [0, 2, 3];
        let zero = distill_interpolate(&target, &base, 0.0).unwrap();
        let one = distill_interpolate(&target, &base, 1.0).unwrap();
        assert_eq!(
            zero.next_distribution(&ctx).unwrap(),
            base.next_distribution(&ctx).unwrap()
        );
        let t = target.next_distribution(&ctx).unwrap();
        assert_eq!(
            kl_divergence(&one.next_distribution(&ctx).unwrap(), &t).unwrap(),
            0.0
        );
    }

    #[test]
    fn lambda_out_of_range() {
        let v = Vocabulary::synthetic(2).unwrap();
        let f = || Fixed(v.clone(), vec![0.5, 0.5]);
        assert!(distill_interpolate(f(), f(), -0.1).is_err());
        assert!(distill_interpolate(f(), f(), 1.5).is_err());
        assert!(distill_interpolate(f(), f(), f64::NAN).is_err());
    }
}
