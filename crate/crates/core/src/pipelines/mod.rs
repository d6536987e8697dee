//! End-to-end interval pipelines over a walk-forward test stream.
//!
//! Four methods share one protocol: fit on the revealed training prefix,
//! then for each block of `H` test steps emit intervals, receive the block's
//! ground truth, and update state. State changes only between blocks.
//!
//! * [`run_aenbmimocqr`]: bagged multi-output quantile nets, out-of-bag CQR
//!   scores, per-horizon sampled sliding windows and ACI.
//! * [`run_mimocqr`]: multi-output quantile nets with a held-out calibration
//!   split and fixed corrections.
//! * [`run_enbpi`]: bagged one-step squared-error nets applied recursively,
//!   symmetric intervals from a sliding window of absolute residuals.
//! * [`run_enbcqr`]: bagged one-step quantile nets, recursion through the
//!   median ensemble, sliding window of CQR scores.

mod ensemble;
mod feedback;
mod methods;

pub use ensemble::{bootstrap_bags, fit_ensemble, member_seed, BootstrapEnsemble, OobPredictions};
pub use feedback::{BacktestStream, FeedbackStream};
pub use methods::{
    run_aenbmimocqr, run_aenbmimocqr_with, run_enbcqr, run_enbcqr_with, run_enbpi,
    run_enbpi_with, run_mimocqr, run_mimocqr_with, split_calibration, window_seed,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{HorizonIntervals, PredictionInterval};

/// Which pipeline produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Aenbmimocqr,
    Mimocqr,
    Enbpi,
    Enbcqr,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Aenbmimocqr,
        Method::Mimocqr,
        Method::Enbpi,
        Method::Enbcqr,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Aenbmimocqr => "aenbmimocqr",
            Method::Mimocqr => "mimocqr",
            Method::Enbpi => "enbpi",
            Method::Enbcqr => "enbcqr",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| crate::error::invalid("method", format!("unknown method `{s}`")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Parameters shared by the pipelines; each method reads the fields it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    /// Number of lags `p`.
    pub lags: usize,
    /// Forecast horizon `H`.
    pub horizon: usize,
    /// Target miscoverage rate.
    pub alpha: f64,
    /// Ensemble size `B`.
    pub n_bootstrap: usize,
    /// Score window size `T` for the adaptive method.
    pub window: usize,
    /// Fraction of training rows held out for calibration (MIMOCQR).
    pub cal_fraction: f64,
    pub seed: u64,
    /// Overrides the ACI learning rate `1 / max(T, |scores|)`.
    pub gamma: Option<f64>,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            lags: 40,
            horizon: 30,
            alpha: 0.1,
            n_bootstrap: 10,
            window: 100,
            cal_fraction: 0.5,
            seed: 0,
            gamma: None,
        }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        if self.lags == 0 {
            return Err(crate::error::invalid("p", "must be positive"));
        }
        if self.horizon == 0 {
            return Err(crate::error::invalid("H", "must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidAlpha(self.alpha));
        }
        if self.n_bootstrap < 2 {
            return Err(crate::error::invalid("B", "an ensemble needs at least 2 members"));
        }
        if self.window == 0 {
            return Err(crate::error::invalid("T", "must be positive"));
        }
        if !(self.cal_fraction > 0.0 && self.cal_fraction < 1.0) {
            return Err(crate::error::invalid("cal_fraction", "must lie in (0, 1)"));
        }
        if let Some(g) = self.gamma {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(crate::error::invalid("gamma", "must be finite and nonnegative"));
            }
        }
        Ok(())
    }
}

/// Intervals issued at one origin together with the revealed targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginRecord {
    pub block: HorizonIntervals,
    pub truth: Vec<f64>,
}

/// Everything a pipeline run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub method: Method,
    pub per_origin: Vec<OriginRecord>,
    /// Per block, the `α_h` in force when the block's intervals were issued.
    /// Only the adaptive method has one.
    pub alpha_trace: Option<Vec<Vec<f64>>>,
    /// Per block, the corrections in force (one per horizon, or a single
    /// value for the recursive methods).
    pub qhat_trace: Vec<Vec<f64>>,
    /// Per block, the score-window sizes in force.
    pub window_trace: Vec<Vec<usize>>,
    /// Training rows contained in every bag, left out of the score sets.
    pub skipped_oob_rows: usize,
    /// Size of the initial score set (per horizon for multi-output methods).
    pub initial_scores: usize,
    pub gamma: Option<f64>,
}

impl RunResult {
    /// All intervals, origin-major.
    pub fn intervals(&self) -> Vec<PredictionInterval> {
        self.per_origin
            .iter()
            .flat_map(|r| r.block.intervals.iter().copied())
            .collect()
    }

    /// All realized targets, origin-major.
    pub fn truth(&self) -> Vec<f64> {
        self.per_origin
            .iter()
            .flat_map(|r| r.truth.iter().copied())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("arima".parse::<Method>().is_err());
    }

    #[test]
    fn defaults_match_experiment_settings() {
        let p = PipelineParams::default();
        assert_eq!((p.lags, p.horizon, p.n_bootstrap, p.window), (40, 30, 10, 100));
        assert_eq!(p.alpha, 0.1);
        p.validate().unwrap();
        assert!(PipelineParams { n_bootstrap: 1, ..p.clone() }.validate().is_err());
        assert!(PipelineParams { alpha: 1.0, ..p }.validate().is_err());
    }
}
