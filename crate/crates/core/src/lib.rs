//! Distribution-free multi-step prediction intervals for univariate time
//! series.
//!
//! The crate provides the adaptive bagged MIMO conformalized quantile
//! regression pipeline together with three comparators (split MIMO CQR and
//! the recursive bagged EnbPI / EnbCQR procedures), the quantile network
//! they share, interval metrics, and a synthetic heteroscedastic benchmark.
//!
//! ```no_run
//! use conformal_forecast::data::{gen_synthetic, SyntheticConfig};
//! use conformal_forecast::model::{NetLearner, TrainConfig};
//! use conformal_forecast::pipelines::{run_aenbmimocqr, BacktestStream, PipelineParams};
//!
//! let (series, _oracle) = gen_synthetic(&SyntheticConfig::default())?;
//! let params = PipelineParams::default();
//! let mut stream = BacktestStream::new(&series, 390, params.horizon)?;
//! let lo = NetLearner::quantile(params.alpha / 2.0, TrainConfig::default())?;
//! let hi = NetLearner::quantile(1.0 - params.alpha / 2.0, TrainConfig::default())?;
//! let result = run_aenbmimocqr(&mut stream, &params, lo, hi)?;
//! println!("{} blocks", result.per_origin.len());
//! # Ok::<(), conformal_forecast::Error>(())
//! ```

pub mod adaptive;
pub mod conformal;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod pipelines;
pub mod rng;
pub mod series;

pub use error::{Error, Result};
pub use series::{HorizonIntervals, PredictionInterval, SupervisedFrame, TimeSeries};
