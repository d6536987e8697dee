//! Data sources: the heteroscedastic synthetic process with its oracle
//! intervals, CSV ingestion/export, and the chronological train/test split.

use std::fs;
use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::series::{PredictionInterval, TimeSeries};

/// How the second parameter of the noise distribution is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleConvention {
    /// `σ_t = c_t μ_t`.
    StdDev,
    /// `σ_t² = c_t μ_t`.
    Variance,
}

impl std::str::FromStr for ScaleConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "std_dev" | "stddev" => Ok(ScaleConvention::StdDev),
            "variance" => Ok(ScaleConvention::Variance),
            other => Err(crate::error::invalid("scale", format!("unknown convention `{other}`"))),
        }
    }
}

/// Parameters of the synthetic process
/// `Y_t ~ N(μ_t, c_t μ_t)`, `μ_t = ln Σ_{i=1}^{warmup} Y_{t-i}²`,
/// `c_t = c_intercept + c_slope t`, with `Y_1..Y_warmup ~ U(0,1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub length: usize,
    pub warmup: usize,
    pub c_intercept: f64,
    pub c_slope: f64,
    pub scale: ScaleConvention,
    /// Multiplies every noise draw; 0 gives the noiseless recursion.
    pub noise_scale: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            length: 1041,
            warmup: 40,
            c_intercept: 0.1,
            c_slope: 1.0 / 1000.0,
            scale: ScaleConvention::StdDev,
            noise_scale: 1.0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup == 0 {
            return Err(crate::error::invalid("warmup", "must be positive"));
        }
        if self.length <= self.warmup {
            return Err(crate::error::invalid("length", "must exceed warmup"));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(crate::error::invalid("noise_scale", "must be finite and nonnegative"));
        }
        Ok(())
    }

    fn c(&self, t: usize) -> f64 {
        self.c_intercept + self.c_slope * t as f64
    }
}

/// Conditional mean and scale of every post-warmup observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleIntervalSet {
    /// 1-based time index of the first entry.
    pub t_start: usize,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl OracleIntervalSet {
    /// Central `1 - alpha` interval `μ_t ± z_{1-α/2} σ_t` for 1-based `t`.
    pub fn interval(&self, t: usize, alpha: f64) -> Option<PredictionInterval> {
        let i = t.checked_sub(self.t_start)?;
        let (mu, sigma) = (*self.mu.get(i)?, *self.sigma.get(i)?);
        let half = normal_quantile(1.0 - alpha / 2.0) * sigma;
        Some(PredictionInterval {
            lower: mu - half,
            upper: mu + half,
        })
    }

    /// 1-based index of the last entry.
    pub fn t_end(&self) -> usize {
        self.t_start + self.mu.len() - 1
    }
}

/// Generates one trajectory of the synthetic process and its oracle.
pub fn gen_synthetic(config: &SyntheticConfig) -> Result<(TimeSeries, OracleIntervalSet)> {
    config.validate()?;
    let mut rng = rng_from_seed(config.seed);
    let lags = config.warmup;
    let mut values: Vec<f64> = (0..lags).map(|_| rng.random::<f64>()).collect();
    let mut mu_all = Vec::with_capacity(config.length - lags);
    let mut sigma_all = Vec::with_capacity(config.length - lags);
    for t in lags + 1..=config.length {
        let sum_sq: f64 = values[t - 1 - lags..t - 1].iter().map(|v| v * v).sum();
        let mu = sum_sq.ln();
        if !(mu > 0.0) {
            return Err(Error::NonPositiveMean { t, mean: mu });
        }
        let spread = config.c(t) * mu;
        let sigma = match config.scale {
            ScaleConvention::StdDev => spread,
            ScaleConvention::Variance => spread.sqrt(),
        };
        let z: f64 = rng.sample(StandardNormal);
        values.push(mu + config.noise_scale * sigma * z);
        mu_all.push(mu);
        sigma_all.push(sigma);
    }
    let id = format!("synthetic-{}", config.seed);
    Ok((
        TimeSeries::new(id, values)?,
        OracleIntervalSet {
            t_start: lags + 1,
            mu: mu_all,
            sigma: sigma_all,
        },
    ))
}

/// Standard normal quantile (Wichura's AS 241, about 1e-16 relative accuracy).
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((2509.0809287301226727 * r + 33430.575583588128105) * r
                + 67265.770927008700853)
                * r
                + 45921.953931549871457)
                * r
                + 13731.693765509461125)
                * r
                + 1971.5909503065514427)
                * r
                + 133.14166789178437745)
                * r
                + 3.387132872796366608)
            / (((((((5226.495278852545925 * r + 28729.085735721942674) * r
                + 39307.89580009271061)
                * r
                + 21213.794301586595867)
                * r
                + 5394.1960214247511077)
                * r
                + 687.1870074920579083)
                * r
                + 42.313330701600911252)
                * r
                + 1.0);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r
            + 0.24178072517745061177)
            * r
            + 1.27045825245236838258)
            * r
            + 3.64784832476320460504)
            * r
            + 5.7694972214606914055)
            * r
            + 4.6303378461565452959)
            * r
            + 1.42343711074968357734)
            / (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r
                + 0.0151986665636164571966)
                * r
                + 0.14810397642748007459)
                * r
                + 0.68976733498510000455)
                * r
                + 1.6763848301838038494)
                * r
                + 2.05319162663775882187)
                * r
                + 1.0)
    } else {
        let r = r - 5.0;
        (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
            + 0.0012426609473880784386)
            * r
            + 0.026532189526576123093)
            * r
            + 0.29656057182850489123)
            * r
            + 1.7848265399172913358)
            * r
            + 5.4637849111641143699)
            * r
            + 6.6579046435011037772)
            / (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r
                + 1.8463183175100546818e-5)
                * r
                + 7.868691311456132591e-4)
                * r
                + 0.0148753612908506148525)
                * r
                + 0.13692988092273580531)
                * r
                + 0.59983220655588793769)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Column arrangement of a CSV file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsvLayout {
    /// One series per column, header holds the ids.
    Wide,
    /// Rows of `(id, t, value)`.
    Long,
}

impl std::str::FromStr for CsvLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wide" => Ok(CsvLayout::Wide),
            "long" => Ok(CsvLayout::Long),
            other => Err(crate::error::invalid("layout", format!("unknown layout `{other}`"))),
        }
    }
}

fn parse_cell(cell: &str, row: usize, col: usize) -> Result<f64> {
    let trimmed = cell.trim();
    if trimmed.is_empty() {
        return Err(Error::MissingValue { row, col });
    }
    let v: f64 = trimmed.parse().map_err(|e: std::num::ParseFloatError| Error::Parse {
        row,
        col,
        msg: format!("`{trimmed}`: {e}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            row,
            col,
            msg: format!("non-finite value `{trimmed}`"),
        });
    }
    Ok(v)
}

fn csv_error(e: csv::Error, row: usize) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        csv::ErrorKind::Utf8 { pos, err } => Error::Parse {
            row: pos.map_or(row, |p| p.line() as usize),
            col: err.field() + 1,
            msg: "invalid UTF-8".to_string(),
        },
        other => Error::Parse {
            row,
            col: 0,
            msg: format!("{other:?}"),
        },
    }
}

/// Reads every series in a CSV file. Row and column numbers in errors are
/// 1-based file coordinates (the header is row 1).
pub fn load_csv(path: &Path, layout: CsvLayout) -> Result<Vec<TimeSeries>> {
    let text = fs::read(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_slice());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(e, 1))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    match layout {
        CsvLayout::Wide => load_wide(reader, headers, path),
        CsvLayout::Long => load_long(reader, headers, path),
    }
}

fn load_wide(
    mut reader: csv::Reader<&[u8]>,
    headers: Vec<String>,
    path: &Path,
) -> Result<Vec<TimeSeries>> {
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| csv_error(e, row))?;
        if record.len() != headers.len() {
            // Short rows are treated as missing trailing cells.
            if record.len() < headers.len() {
                return Err(Error::MissingValue {
                    row,
                    col: record.len() + 1,
                });
            }
            return Err(Error::Parse {
                row,
                col: headers.len() + 1,
                msg: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            columns[j].push(parse_cell(cell, row, j + 1)?);
        }
    }
    if columns[0].is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    headers
        .into_iter()
        .zip(columns)
        .map(|(id, values)| TimeSeries::new(id, values))
        .collect()
}

fn load_long(
    mut reader: csv::Reader<&[u8]>,
    headers: Vec<String>,
    path: &Path,
) -> Result<Vec<TimeSeries>> {
    if headers.len() < 3 {
        return Err(Error::Parse {
            row: 1,
            col: headers.len() + 1,
            msg: "long layout needs columns id, t, value".to_string(),
        });
    }
    // Series keep first-appearance order.
    let mut order: Vec<String> = Vec::new();
    let mut points: std::collections::HashMap<String, Vec<(f64, f64)>> = Default::default();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| csv_error(e, row))?;
        let cell = |j: usize| record.get(j).unwrap_or("");
        let id = cell(0).trim();
        if id.is_empty() {
            return Err(Error::MissingValue { row, col: 1 });
        }
        let t = parse_cell(cell(1), row, 2)?;
        let v = parse_cell(cell(2), row, 3)?;
        let entry = points.entry(id.to_string()).or_insert_with(|| {
            order.push(id.to_string());
            Vec::new()
        });
        entry.push((t, v));
    }
    if order.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    order
        .into_iter()
        .map(|id| {
            let mut pts = points.remove(&id).unwrap_or_default();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            TimeSeries::new(id, pts.into_iter().map(|(_, v)| v).collect())
        })
        .collect()
}

/// Writes equal-length series as a wide CSV. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_wide_csv(path: &Path, series: &[TimeSeries]) -> Result<()> {
    let Some(first) = series.first() else {
        return Err(Error::EmptyInput);
    };
    if let Some(s) = series.iter().find(|s| s.len() != first.len()) {
        return Err(Error::LengthMismatch {
            left: first.len(),
            right: s.len(),
        });
    }
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(e, 0))?;
    writer
        .write_record(series.iter().map(TimeSeries::id))
        .map_err(|e| csv_error(e, 1))?;
    for i in 0..first.len() {
        writer
            .write_record(series.iter().map(|s| s.values()[i].to_string()))
            .map_err(|e| csv_error(e, i + 2))?;
    }
    writer.flush()?;
    Ok(())
}

/// JSON sidecar describing a generated series and its oracle intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSidecar {
    pub schema_version: u32,
    pub series_id: String,
    pub config: SyntheticConfig,
    pub alpha: f64,
    pub t_start: usize,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

pub const SIDECAR_SCHEMA_VERSION: u32 = 1;

impl OracleSidecar {
    pub fn new(
        series_id: &str,
        config: &SyntheticConfig,
        oracle: &OracleIntervalSet,
        alpha: f64,
    ) -> Self {
        let (lower, upper) = (oracle.t_start..=oracle.t_end())
            .map(|t| {
                let iv = oracle.interval(t, alpha).expect("t within oracle range");
                (iv.lower, iv.upper)
            })
            .unzip();
        Self {
            schema_version: SIDECAR_SCHEMA_VERSION,
            series_id: series_id.to_string(),
            config: config.clone(),
            alpha,
            t_start: oracle.t_start,
            mu: oracle.mu.clone(),
            sigma: oracle.sigma.clone(),
            lower,
            upper,
        }
    }

    /// Stored oracle interval for 1-based `t`.
    pub fn interval(&self, t: usize) -> Option<PredictionInterval> {
        let i = t.checked_sub(self.t_start)?;
        Some(PredictionInterval {
            lower: *self.lower.get(i)?,
            upper: *self.upper.get(i)?,
        })
    }

    pub fn oracle(&self) -> OracleIntervalSet {
        OracleIntervalSet {
            t_start: self.t_start,
            mu: self.mu.clone(),
            sigma: self.sigma.clone(),
        }
    }
}

/// Chronological split: the final `n_test` values form the test part.
pub fn split_train_test(series: &TimeSeries, n_test: usize) -> Result<(TimeSeries, TimeSeries)> {
    if n_test == 0 {
        return Err(crate::error::invalid("n_test", "must be positive"));
    }
    if n_test >= series.len() {
        return Err(Error::SeriesTooShort {
            needed: n_test + 1,
            got: series.len(),
        });
    }
    let cut = series.len() - n_test;
    let values = series.values();
    Ok((
        TimeSeries::new(series.id(), values[..cut].to_vec())?,
        TimeSeries::new(series.id(), values[cut..].to_vec())?,
    ))
}
