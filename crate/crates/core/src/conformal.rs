//! Non-conformity scores and the finite-sample conformal quantile.

use crate::error::{Error, Result};
use crate::series::PredictionInterval;

/// Insertion-ordered multiset of finite non-conformity scores.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSet {
    scores: Vec<f64>,
}

impl ScoreSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_scores(scores: Vec<f64>) -> Result<Self> {
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(crate::error::invalid("scores", "must be finite"));
        }
        Ok(Self { scores })
    }

    pub fn push(&mut self, score: f64) -> Result<()> {
        if !score.is_finite() {
            return Err(crate::error::invalid("score", "must be finite"));
        }
        self.scores.push(score);
        Ok(())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        conformal_quantile(&self.scores, alpha)
    }
}

/// Absolute residual `|ŷ - y|`.
pub fn score_absolute(yhat: f64, y: f64) -> f64 {
    (yhat - y).abs()
}

/// Quantile-band score `max(lo - y, y - hi)`; negative iff `y` lies strictly
/// inside `(lo, hi)`.
pub fn score_cqr(lo: f64, hi: f64, y: f64) -> Result<f64> {
    if !(lo <= hi) {
        return Err(Error::InvalidInterval {
            lower: lo,
            upper: hi,
        });
    }
    Ok(cqr_score_unchecked(lo, hi, y))
}

/// [`score_cqr`] without the ordering check. Crossed quantile bands are
/// scored as-is.
pub fn cqr_score_unchecked(lo: f64, hi: f64, y: f64) -> f64 {
    (lo - y).max(y - hi)
}

/// Rank `k = ceil((n+1)(1-alpha))`, clamped into `1..=n`.
///
/// A relative slack of `1e-12` absorbs rounding in `(n+1)(1-alpha)` so that
/// exact integers are not pushed up to the next rank.
pub fn conformal_rank(n: usize, alpha: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidAlpha(alpha));
    }
    if n == 0 {
        return Err(Error::EmptyScoreSet);
    }
    let raw = (n as f64 + 1.0) * (1.0 - alpha);
    let k = (raw - raw.abs() * 1e-12).ceil();
    Ok((k.max(1.0) as usize).min(n))
}

/// The `k`-th smallest score with `k` from [`conformal_rank`]. `alpha = 0`
/// yields the maximum and `alpha = 1` the minimum.
pub fn conformal_quantile(scores: &[f64], alpha: f64) -> Result<f64> {
    let k = conformal_rank(scores.len(), alpha)?;
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[k - 1])
}

/// `[lo - q̂, hi + q̂]`; collapses to the midpoint when a negative `q̂` would
/// invert the band.
pub fn cqr_interval(lo: f64, hi: f64, qhat: f64) -> Result<PredictionInterval> {
    if !(lo <= hi) {
        return Err(Error::InvalidInterval {
            lower: lo,
            upper: hi,
        });
    }
    Ok(corrected_band(lo, hi, qhat))
}

/// [`cqr_interval`] for bands that may be crossed: the corrected bounds are
/// used when ordered and the midpoint otherwise.
pub fn corrected_band(lo: f64, hi: f64, qhat: f64) -> PredictionInterval {
    let lower = lo - qhat;
    let upper = hi + qhat;
    if lower <= upper {
        PredictionInterval { lower, upper }
    } else {
        let mid = 0.5 * (lower + upper);
        PredictionInterval {
            lower: mid,
            upper: mid,
        }
    }
}

/// Symmetric interval `ŷ ± q̂` (degenerates to the midpoint if `q̂ < 0`).
pub fn symmetric_interval(yhat: f64, qhat: f64) -> PredictionInterval {
    corrected_band(yhat, yhat, qhat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng as _;

    #[test]
    fn absolute_score() {
        assert_eq!(score_absolute(3.0, 5.0), 2.0);
        assert_eq!(score_absolute(1.25, 1.25), 0.0);
        let mut rng = rng_from_seed(1);
        for _ in 0..100 {
            let a: f64 = rng.random_range(-10.0..10.0);
            let b: f64 = rng.random_range(-10.0..10.0);
            assert_eq!(score_absolute(a, b), score_absolute(b, a));
        }
    }

    #[test]
    fn cqr_score_examples() {
        assert_eq!(score_cqr(2.0, 5.0, 3.0).unwrap(), -1.0);
        assert_eq!(score_cqr(2.0, 5.0, 7.0).unwrap(), 2.0);
        assert_eq!(score_cqr(4.0, 4.0, 4.0).unwrap(), 0.0);
        assert!(matches!(
            score_cqr(5.0, 2.0, 3.0),
            Err(Error::InvalidInterval { .. })
        ));
    }

    #[test]
    fn quantile_examples() {
        let scores: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(conformal_rank(100, 0.1).unwrap(), 91);
        assert_eq!(conformal_quantile(&scores, 0.1).unwrap(), 91.0);
        assert_eq!(conformal_quantile(&[5.0], 0.1).unwrap(), 5.0);
        assert!(matches!(
            conformal_quantile(&[], 0.1),
            Err(Error::EmptyScoreSet)
        ));
        assert!(matches!(
            conformal_quantile(&[1.0], 1.5),
            Err(Error::InvalidAlpha(_))
        ));
    }

    #[test]
    fn quantile_extremes() {
        let s = [3.0, -1.0, 7.0, 2.0];
        assert_eq!(conformal_quantile(&s, 0.0).unwrap(), 7.0);
        assert_eq!(conformal_quantile(&s, 1.0).unwrap(), -1.0);
    }

    #[test]
    fn exact_integer_ranks_are_not_bumped() {
        // (n+1)(1-alpha) is an integer in exact arithmetic for these pairs.
        assert_eq!(conformal_rank(19, 0.1).unwrap(), 18);
        assert_eq!(conformal_rank(99, 0.1).unwrap(), 90);
        assert_eq!(conformal_rank(9, 0.3).unwrap(), 7);
        assert_eq!(conformal_rank(3, 0.25).unwrap(), 3);
    }

    #[test]
    fn cqr_interval_examples() {
        assert_eq!(
            cqr_interval(2.0, 5.0, 1.0).unwrap(),
            PredictionInterval::new(1.0, 6.0).unwrap()
        );
        assert_eq!(
            cqr_interval(2.0, 5.0, 0.0).unwrap(),
            PredictionInterval::new(2.0, 5.0).unwrap()
        );
        assert_eq!(
            cqr_interval(2.0, 4.0, -2.0).unwrap(),
            PredictionInterval::new(3.0, 3.0).unwrap()
        );
        assert!(cqr_interval(4.0, 2.0, 0.0).is_err());
    }

    fn oracle_quantile(scores: &[f64], alpha: f64) -> f64 {
        // Count-based selection: the smallest value v with #{s <= v} >= k.
        let n = scores.len();
        let k = ((n as f64 + 1.0) * (1.0 - alpha) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
        let mut candidates = scores.to_vec();
        candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
        candidates.dedup();
        *candidates
            .iter()
            .find(|&&v| scores.iter().filter(|&&s| s <= v).count() >= k)
            .unwrap()
    }

    proptest! {
        #[test]
        fn quantile_matches_counting_oracle(
            scores in proptest::collection::vec(-50i32..50, 1..80),
            alpha in 0.0f64..=1.0,
        ) {
            let scores: Vec<f64> = scores.into_iter().map(|v| f64::from(v) / 4.0).collect();
            prop_assert_eq!(conformal_quantile(&scores, alpha).unwrap(), oracle_quantile(&scores, alpha));
        }

        #[test]
        fn quantile_nonincreasing_in_alpha(
            scores in proptest::collection::vec(-100.0f64..100.0, 1..60),
            a in 0.0f64..=1.0,
            b in 0.0f64..=1.0,
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(conformal_quantile(&scores, lo).unwrap() >= conformal_quantile(&scores, hi).unwrap());
        }

        #[test]
        fn cqr_score_sign_matches_membership(
            lo in -10.0f64..10.0, width in 0.0f64..5.0, y in -20.0f64..20.0,
        ) {
            let hi = lo + width;
            let s = score_cqr(lo, hi, y).unwrap();
            prop_assert_eq!(s <= 0.0, lo <= y && y <= hi);
        }

        #[test]
        fn corrected_band_is_ordered(lo in -10.0f64..10.0, hi in -10.0f64..10.0, q in -20.0f64..20.0) {
            let iv = corrected_band(lo, hi, q);
            prop_assert!(iv.lower <= iv.upper);
        }
    }
}
