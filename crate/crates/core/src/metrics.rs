//! Interval quality measures: coverage (PICP), normalized width (PINAW) and
//! mean intersection-over-union against reference intervals (MIOU).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::PredictionInterval;

fn check_lengths(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::LengthMismatch { left, right });
    }
    if left == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

/// Fraction of `y` inside the closed intervals.
pub fn picp(intervals: &[PredictionInterval], y: &[f64]) -> Result<f64> {
    check_lengths(intervals.len(), y.len())?;
    let covered = intervals
        .iter()
        .zip(y)
        .filter(|(iv, &v)| iv.contains(v))
        .count();
    Ok(covered as f64 / y.len() as f64)
}

/// Realized range `max(y) - min(y)`.
pub fn value_range(y: &[f64]) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (lo, hi) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    if range > 0.0 {
        Ok(range)
    } else {
        Err(Error::ZeroRange)
    }
}

/// Mean interval width divided by `range`.
pub fn pinaw_with_range(intervals: &[PredictionInterval], range: f64) -> Result<f64> {
    if intervals.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(range > 0.0) {
        return Err(Error::ZeroRange);
    }
    let total: f64 = intervals.iter().map(PredictionInterval::width).sum();
    Ok(total / (intervals.len() as f64 * range))
}

/// Mean width normalized by the range of the realized values `y`.
pub fn pinaw(intervals: &[PredictionInterval], y: &[f64]) -> Result<f64> {
    check_lengths(intervals.len(), y.len())?;
    pinaw_with_range(intervals, value_range(y)?)
}

/// Intersection over union of two closed intervals. Disjoint intervals score
/// 0; two identical points score 1.
pub fn iou(a: &PredictionInterval, b: &PredictionInterval) -> f64 {
    let inter = (a.upper.min(b.upper) - a.lower.max(b.lower)).max(0.0);
    let union = a.upper.max(b.upper) - a.lower.min(b.lower);
    if union > 0.0 {
        inter / union
    } else if a == b {
        1.0
    } else {
        0.0
    }
}

/// Mean IOU between delivered and reference intervals.
pub fn miou(intervals: &[PredictionInterval], oracle: &[PredictionInterval]) -> Result<f64> {
    check_lengths(intervals.len(), oracle.len())?;
    let total: f64 = intervals.iter().zip(oracle).map(|(a, b)| iou(a, b)).sum();
    Ok(total / intervals.len() as f64)
}

/// Per-series evaluation with per-horizon breakdowns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub picp: f64,
    pub pinaw: f64,
    pub miou: Option<f64>,
    pub picp_by_horizon: Vec<f64>,
    pub pinaw_by_horizon: Vec<f64>,
    pub miou_by_horizon: Option<Vec<f64>>,
}

/// Evaluates origin-major blocks of `H` intervals. `y` and `oracle` follow
/// the same layout. Every measure is normalized by the range of all of `y`.
pub fn evaluate_blocks(
    intervals: &[PredictionInterval],
    y: &[f64],
    oracle: Option<&[PredictionInterval]>,
    horizon: usize,
) -> Result<EvalReport> {
    check_lengths(intervals.len(), y.len())?;
    if horizon == 0 || intervals.len() % horizon != 0 {
        return Err(crate::error::invalid(
            "H",
            format!("{} intervals do not split into blocks of {horizon}", intervals.len()),
        ));
    }
    if let Some(o) = oracle {
        check_lengths(intervals.len(), o.len())?;
    }
    let range = value_range(y)?;
    let column = |h: usize| -> Vec<usize> { (h..intervals.len()).step_by(horizon).collect() };

    let mut picp_by_horizon = Vec::with_capacity(horizon);
    let mut pinaw_by_horizon = Vec::with_capacity(horizon);
    let mut miou_by_horizon = oracle.map(|_| Vec::with_capacity(horizon));
    for h in 0..horizon {
        let idx = column(h);
        let iv: Vec<PredictionInterval> = idx.iter().map(|&i| intervals[i]).collect();
        let yy: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        picp_by_horizon.push(picp(&iv, &yy)?);
        pinaw_by_horizon.push(pinaw_with_range(&iv, range)?);
        if let (Some(o), Some(acc)) = (oracle, miou_by_horizon.as_mut()) {
            let oo: Vec<PredictionInterval> = idx.iter().map(|&i| o[i]).collect();
            acc.push(miou(&iv, &oo)?);
        }
    }
    Ok(EvalReport {
        picp: picp(intervals, y)?,
        pinaw: pinaw_with_range(intervals, range)?,
        miou: oracle.map(|o| miou(intervals, o)).transpose()?,
        picp_by_horizon,
        pinaw_by_horizon,
        miou_by_horizon,
    })
}

/// Cross-series means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub picp_star: f64,
    pub pinaw_star: f64,
    /// Present only when every report has an MIOU.
    pub miou_mean: Option<f64>,
    pub n_series: usize,
}

/// Unweighted means of PICP and PINAW across series.
pub fn aggregate_star(reports: &[EvalReport]) -> Result<Aggregate> {
    if reports.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = reports.len() as f64;
    let miou_mean = reports
        .iter()
        .map(|r| r.miou)
        .collect::<Option<Vec<f64>>>()
        .map(|v| v.iter().sum::<f64>() / n);
    Ok(Aggregate {
        picp_star: reports.iter().map(|r| r.picp).sum::<f64>() / n,
        pinaw_star: reports.iter().map(|r| r.pinaw).sum::<f64>() / n,
        miou_mean,
        n_series: reports.len(),
    })
}
