//! Bagged ensembles with out-of-bag aggregation.

use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Learner, Regressor};
use crate::rng::{derive_seed, rng_from_seed};
use crate::series::SupervisedFrame;

const BAG_STREAM: u64 = 0xBA6;
const TRAIN_STREAM: u64 = 0x7EA1;

/// Seed used to train learner `learner` on bag `member`.
pub fn member_seed(seed: u64, member: usize, learner: usize) -> u64 {
    derive_seed(seed, &[TRAIN_STREAM, member as u64, learner as u64])
}

/// `n_bootstrap` resamples of `0..n`, each of size `n`, drawn with replacement.
pub fn bootstrap_bags(n: usize, n_bootstrap: usize, seed: u64) -> Vec<Vec<usize>> {
    (0..n_bootstrap)
        .map(|b| {
            let mut rng = rng_from_seed(derive_seed(seed, &[BAG_STREAM, b as u64]));
            (0..n).map(|_| rng.random_range(0..n)).collect()
        })
        .collect()
}

/// `B` bags with one model per learner trained on each bag. All learners
/// share the same bags.
#[derive(Debug, Clone)]
pub struct BootstrapEnsemble<M> {
    bags: Vec<Vec<usize>>,
    in_bag: Vec<Vec<bool>>,
    /// `models[learner][member]`.
    models: Vec<Vec<M>>,
    n_rows: usize,
}

impl<M: Regressor> BootstrapEnsemble<M> {
    /// Assembles an ensemble from already-fitted parts.
    pub fn from_parts(n_rows: usize, bags: Vec<Vec<usize>>, models: Vec<Vec<M>>) -> Result<Self> {
        if bags.len() < 2 {
            return Err(crate::error::invalid("B", "an ensemble needs at least 2 members"));
        }
        if models.iter().any(|m| m.len() != bags.len()) {
            return Err(crate::error::invalid("models", "one model per bag and learner"));
        }
        let mut in_bag = vec![vec![false; n_rows]; bags.len()];
        for (flags, bag) in in_bag.iter_mut().zip(&bags) {
            for &i in bag {
                if i >= n_rows {
                    return Err(crate::error::invalid("bags", format!("row {i} out of range")));
                }
                flags[i] = true;
            }
        }
        Ok(Self {
            bags,
            in_bag,
            models,
            n_rows,
        })
    }

    pub fn n_members(&self) -> usize {
        self.bags.len()
    }

    pub fn n_learners(&self) -> usize {
        self.models.len()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    /// Index multiset of each member (0-based row indices).
    pub fn bags(&self) -> &[Vec<usize>] {
        &self.bags
    }

    pub fn contains(&self, member: usize, row: usize) -> bool {
        self.in_bag[member][row]
    }

    pub fn models(&self, learner: usize) -> &[M] {
        &self.models[learner]
    }

    /// Mean prediction of every member for learner `learner`.
    pub fn predict_mean(&self, learner: usize, x: &[f64]) -> Vec<f64> {
        let members = &self.models[learner];
        let mut acc = members[0].predict_one(x);
        for m in &members[1..] {
            for (a, v) in acc.iter_mut().zip(m.predict_one(x)) {
                *a += v;
            }
        }
        let b = members.len() as f64;
        acc.iter_mut().for_each(|a| *a /= b);
        acc
    }

    /// Out-of-bag aggregation for learner `learner` over the frame the
    /// ensemble was fitted on.
    pub fn oob_predict(&self, learner: usize, frame: &SupervisedFrame) -> Result<OobPredictions> {
        if frame.n_rows() != self.n_rows {
            return Err(Error::LengthMismatch {
                left: frame.n_rows(),
                right: self.n_rows,
            });
        }
        let members = &self.models[learner];
        let width = members[0].output_dim();
        let all: Vec<_> = members
            .iter()
            .map(|m| m.predict_rows(frame.covariates()))
            .collect();
        let mut rows = Vec::with_capacity(self.n_rows);
        let mut skipped = Vec::new();
        for i in 0..self.n_rows {
            let mut sum = vec![0.0; width];
            let mut count = 0usize;
            for (b, pred) in all.iter().enumerate() {
                if !self.in_bag[b][i] {
                    for (s, v) in sum.iter_mut().zip(pred.row(i)) {
                        *s += v;
                    }
                    count += 1;
                }
            }
            if count == 0 {
                skipped.push(i);
                rows.push(None);
            } else {
                sum.iter_mut().for_each(|s| *s /= count as f64);
                rows.push(Some(sum));
            }
        }
        if skipped.len() == self.n_rows {
            return Err(Error::AllRowsInBag);
        }
        Ok(OobPredictions { rows, skipped })
    }
}

/// Per-row out-of-bag means; rows contained in every bag are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct OobPredictions {
    pub rows: Vec<Option<Vec<f64>>>,
    pub skipped: Vec<usize>,
}

/// Draws `n_bootstrap` bags and trains every learner on every bag. Members
/// are trained in parallel; results do not depend on the schedule.
pub fn fit_ensemble<L: Learner>(
    frame: &SupervisedFrame,
    learners: &[L],
    n_bootstrap: usize,
    seed: u64,
) -> Result<BootstrapEnsemble<L::Model>> {
    if n_bootstrap < 2 {
        return Err(crate::error::invalid("B", "an ensemble needs at least 2 members"));
    }
    if frame.is_empty() {
        return Err(Error::EmptyInput);
    }
    if learners.is_empty() {
        return Err(crate::error::invalid("learners", "need at least one learner"));
    }
    let bags = bootstrap_bags(frame.n_rows(), n_bootstrap, seed);
    let jobs: Vec<(usize, usize)> = (0..learners.len())
        .flat_map(|k| (0..n_bootstrap).map(move |b| (k, b)))
        .collect();
    let fitted: Vec<L::Model> = jobs
        .par_iter()
        .map(|&(k, b)| {
            let resample = frame.select_rows(&bags[b]);
            learners[k].fit(&resample, member_seed(seed, b, k))
        })
        .collect::<Result<_>>()?;
    let mut fitted = fitted.into_iter();
    let models = (0..learners.len())
        .map(|_| fitted.by_ref().take(n_bootstrap).collect())
        .collect();
    BootstrapEnsemble::from_parts(frame.n_rows(), bags, models)
}
