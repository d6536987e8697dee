use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the forecasting and conformal pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("series too short: need at least {needed} observations, have {got}")]
    SeriesTooShort { needed: usize, got: usize },

    #[error("series `{id}` contains a non-finite value at position {index}")]
    NonFiniteValue { id: String, index: usize },

    #[error("empty series `{0}`")]
    EmptySeries(String),

    #[error("quantile level tau must lie in (0, 1), got {0}")]
    InvalidTau(f64),

    #[error("miscoverage level must lie in [0, 1], got {0}")]
    InvalidAlpha(f64),

    #[error("invalid interval: lower {lower} exceeds upper {upper}")]
    InvalidInterval { lower: f64, upper: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("training loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("score set is empty")]
    EmptyScoreSet,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("realized values have zero range")]
    ZeroRange,

    #[error("every training row is in every bootstrap bag; increase the ensemble size")]
    AllRowsInBag,

    #[error("synthetic process produced a non-positive mean {mean} at t = {t}")]
    NonPositiveMean { t: usize, mean: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("feedback protocol violation: {0}")]
    Protocol(String),

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("missing value at row {row}, column {col}")]
    MissingValue { row: usize, col: usize },

    #[error("file {0} contains no data")]
    EmptyFile(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
