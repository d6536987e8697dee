//! Time-series containers and their conversion into supervised learning
//! problems for the recursive (one-step) and MIMO (multi-output) strategies.
//!
//! Contracts are stated with 1-based time indices: a series is
//! `y_1, ..., y_n`, and frame row `i` holds the covariates
//! `(y_i, ..., y_{i+p-1})`. Storage is 0-based and row-major.

use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An ordered sequence of finite observations with a label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    id: String,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if values.is_empty() {
            return Err(Error::EmptySeries(id));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { id, index });
        }
        Ok(Self { id, values })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Covariate matrix paired with a target matrix, one row per training case.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedFrame {
    covariates: Array2<f64>,
    targets: Array2<f64>,
}

impl SupervisedFrame {
    pub fn new(covariates: Array2<f64>, targets: Array2<f64>) -> Result<Self> {
        if covariates.nrows() != targets.nrows() {
            return Err(Error::LengthMismatch {
                left: covariates.nrows(),
                right: targets.nrows(),
            });
        }
        Ok(Self {
            covariates,
            targets,
        })
    }

    pub fn covariates(&self) -> &Array2<f64> {
        &self.covariates
    }

    pub fn targets(&self) -> &Array2<f64> {
        &self.targets
    }

    /// Number of lags (`p`).
    pub fn lags(&self) -> usize {
        self.covariates.ncols()
    }

    /// Number of target columns (`H`).
    pub fn horizon(&self) -> usize {
        self.targets.ncols()
    }

    pub fn n_rows(&self) -> usize {
        self.covariates.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows() == 0
    }

    pub fn covariate_row(&self, i: usize) -> &[f64] {
        self.covariates
            .row(i)
            .to_slice()
            .expect("frame rows are contiguous")
    }

    pub fn target_row(&self, i: usize) -> &[f64] {
        self.targets
            .row(i)
            .to_slice()
            .expect("frame rows are contiguous")
    }

    /// Frame made of the given rows, repeats allowed (bootstrap resamples).
    pub fn select_rows(&self, rows: &[usize]) -> SupervisedFrame {
        SupervisedFrame {
            covariates: self.covariates.select(Axis(0), rows),
            targets: self.targets.select(Axis(0), rows),
        }
    }

    /// Contiguous block of rows `[start, end)`.
    pub fn slice_rows(&self, start: usize, end: usize) -> SupervisedFrame {
        SupervisedFrame {
            covariates: self.covariates.slice(s![start..end, ..]).to_owned(),
            targets: self.targets.slice(s![start..end, ..]).to_owned(),
        }
    }
}

/// Closed interval `[lower, upper]` with `lower <= upper`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub lower: f64,
    pub upper: f64,
}

impl PredictionInterval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        // NaN bounds fail this comparison as well.
        if !(lower <= upper) {
            return Err(Error::InvalidInterval { lower, upper });
        }
        Ok(Self { lower, upper })
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lower <= y && y <= self.upper
    }
}

/// The `H` step-wise intervals issued at one forecast origin.
///
/// `origin` is the 1-based time index of the first forecast target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonIntervals {
    pub origin: usize,
    pub intervals: Vec<PredictionInterval>,
}

impl HorizonIntervals {
    pub fn horizon(&self) -> usize {
        self.intervals.len()
    }
}

fn windowed(values: &[f64], p: usize, h: usize) -> Result<SupervisedFrame> {
    if p == 0 {
        return Err(crate::error::invalid("p", "lag count must be positive"));
    }
    if h == 0 {
        return Err(crate::error::invalid("H", "horizon must be positive"));
    }
    let needed = p + h;
    if values.len() < needed {
        return Err(Error::SeriesTooShort {
            needed,
            got: values.len(),
        });
    }
    let n_rows = values.len() - p - h + 1;
    let covariates = Array2::from_shape_fn((n_rows, p), |(i, j)| values[i + j]);
    let targets = Array2::from_shape_fn((n_rows, h), |(i, j)| values[i + p + j]);
    SupervisedFrame::new(covariates, targets)
}

/// One-step framing: rows `((y_i, ..., y_{i+p-1}) | y_{i+p})` for `1 <= i <= n - p`.
pub fn frame_recursive(series: &TimeSeries, p: usize) -> Result<SupervisedFrame> {
    windowed(series.values(), p, 1)
}

/// Multi-output framing: every row's target holds exactly `H` values and the
/// final row's target ends at `y_n`.
pub fn frame_mimo(series: &TimeSeries, p: usize, horizon: usize) -> Result<SupervisedFrame> {
    windowed(series.values(), p, horizon)
}

/// Same as [`frame_mimo`] over a raw slice.
pub fn frame_values(values: &[f64], p: usize, horizon: usize) -> Result<SupervisedFrame> {
    windowed(values, p, horizon)
}

/// Iterates a one-step predictor `horizon` times, feeding its own outputs
/// back in.
///
/// Step `h` sees `(y_{n-p+h}, ..., y_n, ŷ_{n+1}, ..., ŷ_{n+h-1})` while
/// `h <= p` and only predictions `(ŷ_{n+h-p}, ..., ŷ_{n+h-1})` afterwards.
pub fn recursive_forecast<F>(mut predict: F, last_window: &[f64], horizon: usize) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let p = last_window.len();
    let mut buffer = Vec::with_capacity(p + horizon);
    buffer.extend_from_slice(last_window);
    for h in 0..horizon {
        let next = predict(&buffer[h..h + p]);
        buffer.push(next);
    }
    buffer.split_off(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ts(values: Vec<f64>) -> TimeSeries {
        TimeSeries::new("s", values).unwrap()
    }

    fn enumerate_windows(n: usize, p: usize, h: usize) -> usize {
        // Count start positions whose covariate and target windows fit.
        (1..=n).filter(|&i| i + p + h - 1 <= n).count()
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(matches!(
            TimeSeries::new("x", vec![1.0, f64::NAN]),
            Err(Error::NonFiniteValue { index: 1, .. })
        ));
        assert!(matches!(
            TimeSeries::new("x", vec![]),
            Err(Error::EmptySeries(_))
        ));
    }

    #[test]
    fn recursive_frame_small() {
        let f = frame_recursive(&ts(vec![1., 2., 3., 4., 5.]), 2).unwrap();
        assert_eq!(f.n_rows(), 3);
        assert_eq!(f.covariate_row(0), &[1., 2.]);
        assert_eq!(f.target_row(0), &[3.]);
        assert_eq!(f.covariate_row(1), &[2., 3.]);
        assert_eq!(f.target_row(1), &[4.]);
        assert_eq!(f.covariate_row(2), &[3., 4.]);
        assert_eq!(f.target_row(2), &[5.]);
    }

    #[test]
    fn recursive_frame_too_short() {
        assert!(matches!(
            frame_recursive(&ts(vec![7.]), 1),
            Err(Error::SeriesTooShort { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn recursive_frame_row_count() {
        let values: Vec<f64> = (0..791).map(f64::from).collect();
        let f = frame_recursive(&ts(values), 40).unwrap();
        assert_eq!(enumerate_windows(791, 40, 1), 751);
        assert_eq!(f.n_rows(), 751);
    }

    #[test]
    fn mimo_frame_small() {
        let values: Vec<f64> = (1..=10).map(f64::from).collect();
        let f = frame_mimo(&ts(values), 2, 2).unwrap();
        assert_eq!(f.n_rows(), 7);
        assert_eq!(f.covariate_row(0), &[1., 2.]);
        assert_eq!(f.target_row(0), &[3., 4.]);
        assert_eq!(f.covariate_row(6), &[7., 8.]);
        assert_eq!(f.target_row(6), &[9., 10.]);
    }

    #[test]
    fn mimo_frame_minimal() {
        let f = frame_mimo(&ts(vec![1., 2., 3.]), 1, 2).unwrap();
        assert_eq!(f.n_rows(), 1);
        assert_eq!(f.covariate_row(0), &[1.]);
        assert_eq!(f.target_row(0), &[2., 3.]);
        assert!(matches!(
            frame_mimo(&ts(vec![1., 2.]), 1, 2),
            Err(Error::SeriesTooShort { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn mimo_frame_row_count() {
        let values: Vec<f64> = (0..1041).map(f64::from).collect();
        let f = frame_mimo(&ts(values), 40, 30).unwrap();
        assert_eq!(enumerate_windows(1041, 40, 30), 972);
        assert_eq!(f.n_rows(), 972);
        assert_eq!(f.target_row(971)[29], 1040.0);
    }

    #[test]
    fn echo_last_is_fixed_point() {
        let out = recursive_forecast(|x| x[x.len() - 1], &[4., 5.], 3);
        assert_eq!(out, vec![5., 5., 5.]);
    }

    #[test]
    fn fibonacci_recursion() {
        let out = recursive_forecast(|x| x[0] + x[1], &[1., 1.], 3);
        assert_eq!(out, vec![2., 3., 5.]);
    }

    #[test]
    fn linear_model_extends_line() {
        // y_t = 3 + 2t; the model 2*x_p - x_{p-1} reproduces any line.
        let window: Vec<f64> = (1..=4).map(|t| 3.0 + 2.0 * f64::from(t)).collect();
        let out = recursive_forecast(|x| 2.0 * x[x.len() - 1] - x[x.len() - 2], &window, 10);
        for (h, v) in out.iter().enumerate() {
            let t = 5.0 + h as f64;
            assert!((v - (3.0 + 2.0 * t)).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn mimo_with_unit_horizon_matches_recursive(
            values in proptest::collection::vec(-100.0f64..100.0, 3..60),
            p in 1usize..5,
        ) {
            prop_assume!(values.len() > p);
            let s = ts(values);
            prop_assert_eq!(frame_mimo(&s, p, 1).unwrap(), frame_recursive(&s, p).unwrap());
        }

        #[test]
        fn first_row_and_last_targets_reconstruct_series(
            values in proptest::collection::vec(-100.0f64..100.0, 4..60),
            p in 1usize..4,
            h in 1usize..4,
        ) {
            prop_assume!(values.len() >= p + h);
            let f = frame_mimo(&ts(values.clone()), p, h).unwrap();
            let mut rebuilt: Vec<f64> = f.covariate_row(0).to_vec();
            rebuilt.extend_from_slice(f.target_row(0));
            rebuilt.extend(f.targets().column(h - 1).iter().skip(1));
            prop_assert_eq!(rebuilt.as_slice(), values.as_slice());
            prop_assert_eq!(f.target_row(f.n_rows() - 1)[h - 1], *values.last().unwrap());
        }

        #[test]
        fn recursive_inputs_follow_case_split(
            window in proptest::collection::vec(-10.0f64..10.0, 1..6),
            horizon in 1usize..12,
        ) {
            let p = window.len();
            let mut seen: Vec<Vec<f64>> = Vec::new();
            let mut counter = 1000.0;
            let preds = recursive_forecast(
                |x| {
                    seen.push(x.to_vec());
                    counter += 1.0;
                    counter
                },
                &window,
                horizon,
            );
            for h in 1..=horizon {
                let input = &seen[h - 1];
                prop_assert_eq!(input.len(), p);
                if h == 1 {
                    prop_assert_eq!(input.as_slice(), window.as_slice());
                } else if h <= p {
                    prop_assert_eq!(&input[..p - h + 1], &window[h - 1..]);
                    prop_assert_eq!(&input[p - h + 1..], &preds[..h - 1]);
                } else {
                    prop_assert_eq!(input.as_slice(), &preds[h - 1 - p..h - 1]);
                }
            }
        }
    }
}
