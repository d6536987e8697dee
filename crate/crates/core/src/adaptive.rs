//! Online adaptation: per-horizon miscoverage tracking and the fixed-capacity
//! FIFO window of non-conformity scores.

use std::collections::VecDeque;

use rand::seq::index;

use crate::conformal::{conformal_quantile, ScoreSet};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Per-horizon miscoverage levels updated from coverage feedback.
#[derive(Debug, Clone, PartialEq)]
pub struct AciState {
    target_alpha: f64,
    gamma: f64,
    alphas: Vec<f64>,
}

impl AciState {
    /// Every horizon starts at `target_alpha`.
    pub fn new(target_alpha: f64, gamma: f64, horizon: usize) -> Result<Self> {
        if !(target_alpha > 0.0 && target_alpha < 1.0) {
            return Err(Error::InvalidAlpha(target_alpha));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(crate::error::invalid("gamma", "must be a finite nonnegative rate"));
        }
        if horizon == 0 {
            return Err(crate::error::invalid("H", "horizon must be positive"));
        }
        Ok(Self {
            target_alpha,
            gamma,
            alphas: vec![target_alpha; horizon],
        })
    }

    /// State with explicit starting levels (must lie in `[0, 1]`).
    pub fn with_alphas(target_alpha: f64, gamma: f64, alphas: Vec<f64>) -> Result<Self> {
        let mut state = Self::new(target_alpha, gamma, alphas.len())?;
        if let Some(&bad) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::InvalidAlpha(bad));
        }
        state.alphas = alphas;
        Ok(state)
    }

    pub fn target_alpha(&self) -> f64 {
        self.target_alpha
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// Current level for 1-based horizon `h`.
    pub fn alpha(&self, h: usize) -> f64 {
        self.alphas[h - 1]
    }

    /// Unclamped update value for horizon `h` (1-based).
    pub fn proposed(&self, h: usize, covered: bool) -> f64 {
        let miss = if covered { 0.0 } else { 1.0 };
        self.alphas[h - 1] + self.gamma * (self.target_alpha - miss)
    }

    /// `α_h ← clamp(α_h + γ(α − 1{miss}), 0, 1)` for 1-based `h`; other
    /// horizons are untouched.
    pub fn update(&mut self, h: usize, covered: bool) {
        assert!(
            (1..=self.alphas.len()).contains(&h),
            "horizon index {h} out of 1..={}",
            self.alphas.len()
        );
        self.alphas[h - 1] = self.proposed(h, covered).clamp(0.0, 1.0);
    }
}

/// Value-returning form of [`AciState::update`].
pub fn aci_update(mut state: AciState, h: usize, covered: bool) -> AciState {
    state.update(h, covered);
    state
}

/// Learning rate `1 / max(T, |initial scores|)`.
pub fn init_gamma(window: usize, initial_score_count: usize) -> f64 {
    1.0 / window.max(initial_score_count).max(1) as f64
}

/// Fixed-capacity FIFO of scores. Pushing into a full window evicts the
/// oldest element; before that, pushes append.
#[derive(Debug, Clone, PartialEq)]
pub struct SlidingScoreWindow {
    capacity: usize,
    scores: VecDeque<f64>,
}

impl SlidingScoreWindow {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(crate::error::invalid("capacity", "must be positive"));
        }
        Ok(Self {
            capacity,
            scores: VecDeque::with_capacity(capacity),
        })
    }

    /// Window at capacity `scores.len()` holding `scores` in order.
    pub fn full(scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::EmptyScoreSet);
        }
        Ok(Self {
            capacity: scores.len(),
            scores: scores.into(),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.scores.len() == self.capacity
    }

    pub fn push(&mut self, score: f64) {
        if self.scores.len() == self.capacity {
            self.scores.pop_front();
        }
        self.scores.push_back(score);
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.scores.iter().copied().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.scores.iter()
    }

    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        let (a, b) = self.scores.as_slices();
        if b.is_empty() {
            conformal_quantile(a, alpha)
        } else {
            conformal_quantile(&self.to_vec(), alpha)
        }
    }
}

/// Value-returning push.
pub fn slide(mut window: SlidingScoreWindow, new_score: f64) -> SlidingScoreWindow {
    window.push(new_score);
    window
}

/// Sorted positions of a uniform size-`min(t, n)` subset of `0..n`.
pub fn sample_indices(n: usize, t: usize, seed: u64) -> Vec<usize> {
    if n <= t {
        return (0..n).collect();
    }
    let mut rng = rng_from_seed(seed);
    let mut picked = index::sample(&mut rng, n, t).into_vec();
    picked.sort_unstable();
    picked
}

/// Uniform subset of `t` scores (all of them when there are at most `t`),
/// kept in original insertion order; the window's capacity is the subset size.
pub fn sample_without_replacement(
    scores: &ScoreSet,
    t: usize,
    seed: u64,
) -> Result<SlidingScoreWindow> {
    if scores.is_empty() {
        return Err(Error::EmptyScoreSet);
    }
    if t == 0 {
        return Err(crate::error::invalid("T", "sample size must be positive"));
    }
    let all = scores.as_slice();
    let kept = sample_indices(all.len(), t, seed)
        .into_iter()
        .map(|i| all[i])
        .collect();
    SlidingScoreWindow::full(kept)
}
