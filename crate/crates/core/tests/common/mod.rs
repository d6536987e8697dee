#![allow(dead_code)]

use conformal_forecast::model::{Learner, Regressor};
use conformal_forecast::pipelines::FeedbackStream;
use conformal_forecast::rng::rng_from_seed;
use conformal_forecast::{HorizonIntervals, Result, SupervisedFrame};
use rand::Rng as _;

/// Affine map `b + W x`, with `W` stored row per output.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl Regressor for Linear {
    fn input_dim(&self) -> usize {
        self.weights[0].len()
    }
    fn output_dim(&self) -> usize {
        self.bias.len()
    }
    fn predict_one(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| b + w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>())
            .collect()
    }
}

/// "Fits" random weights keyed by the seed and a bias equal to the column
/// means of the frame's targets plus `offset`.
#[derive(Debug, Clone, Copy)]
pub struct LinearLearner {
    pub offset: f64,
    pub scale: f64,
}

impl Learner for LinearLearner {
    type Model = Linear;
    fn fit(&self, frame: &SupervisedFrame, seed: u64) -> Result<Linear> {
        let mut rng = rng_from_seed(seed);
        let (p, h) = (frame.lags(), frame.horizon());
        let weights = (0..h)
            .map(|_| {
                (0..p)
                    .map(|_| if self.scale > 0.0 { rng.random_range(-self.scale..self.scale) } else { 0.0 })
                    .collect()
            })
            .collect();
        let n = frame.n_rows() as f64;
        let bias = (0..h)
            .map(|j| (0..frame.n_rows()).map(|i| frame.target_row(i)[j]).sum::<f64>() / n + self.offset)
            .collect();
        Ok(Linear { weights, bias })
    }
}

/// Iterates `y <- a y + c` from the last lag, emitting `h` steps, then
/// shifts every output by `offset`.
#[derive(Debug, Clone, Copy)]
pub struct Recurrence {
    pub lags: usize,
    pub horizon: usize,
    pub a: f64,
    pub c: f64,
    pub offset: f64,
}

impl Regressor for Recurrence {
    fn input_dim(&self) -> usize {
        self.lags
    }
    fn output_dim(&self) -> usize {
        self.horizon
    }
    fn predict_one(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x[x.len() - 1];
        (0..self.horizon)
            .map(|_| {
                y = self.a * y + self.c;
                y + self.offset
            })
            .collect()
    }
}

pub fn recurrence_series(n: usize, y0: f64, a: f64, c: f64) -> Vec<f64> {
    let mut out = vec![y0];
    while out.len() < n {
        let last = *out.last().unwrap();
        out.push(a * last + c);
    }
    out
}

/// Feedback stream whose revealed truth is chosen by a callback after the
/// block's intervals are seen.
pub struct ScriptedStream<F> {
    pub history: Vec<f64>,
    pub horizon: usize,
    pub blocks: usize,
    pub respond: F,
}

impl<F: FnMut(&HorizonIntervals) -> Vec<f64>> FeedbackStream for ScriptedStream<F> {
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn history(&self) -> &[f64] {
        &self.history
    }
    fn remaining_blocks(&self) -> usize {
        self.blocks
    }
    fn submit(&mut self, intervals: HorizonIntervals) -> Result<Vec<f64>> {
        assert!(self.blocks > 0);
        assert_eq!(intervals.origin, self.history.len() + 1);
        let truth = (self.respond)(&intervals);
        self.history.extend_from_slice(&truth);
        self.blocks -= 1;
        Ok(truth)
    }
}
