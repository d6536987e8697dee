//! The `eval` command: recompute the metrics from an intervals file alone.

use std::path::Path;

use conformal_forecast::data::OracleSidecar;
use conformal_forecast::metrics::{aggregate_star, evaluate_blocks, Aggregate, EvalReport};
use conformal_forecast::PredictionInterval;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::run::{csv_error, IntervalRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesReport {
    pub series_id: String,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub per_series: Vec<SeriesReport>,
    pub aggregates: Aggregate,
}

pub fn read_intervals(path: &Path) -> CliResult<Vec<IntervalRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let rows = reader
        .deserialize()
        .collect::<Result<Vec<IntervalRow>, _>>()
        .map_err(|e| csv_error(path, e))?;
    if rows.is_empty() {
        return Err(conformal_forecast::Error::EmptyFile(path.to_path_buf()).into());
    }
    Ok(rows)
}

pub fn read_sidecar(path: &Path) -> CliResult<OracleSidecar> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

fn parse_error(path: &Path, msg: String) -> CliError {
    CliError::Parse {
        path: path.to_path_buf(),
        msg,
    }
}

/// Groups rows by series (first-appearance order) and checks that every
/// block lists steps `1..=H` in order.
fn blocks<'a>(path: &Path, rows: &'a [IntervalRow]) -> CliResult<Vec<(String, Vec<&'a IntervalRow>, usize)>> {
    let mut groups: Vec<(String, Vec<&IntervalRow>)> = Vec::new();
    for row in rows {
        match groups.iter_mut().find(|(id, _)| *id == row.series) {
            Some((_, g)) => g.push(row),
            None => groups.push((row.series.clone(), vec![row])),
        }
    }
    groups
        .into_iter()
        .map(|(id, g)| {
            let horizon = g.iter().map(|r| r.h).max().unwrap_or(0);
            for (i, r) in g.iter().enumerate() {
                let expected_h = i % horizon + 1;
                let origin = g[i - i % horizon].origin;
                if r.h != expected_h || r.origin != origin {
                    return Err(parse_error(
                        path,
                        format!("series `{id}`: row for origin {} step {} is out of order", r.origin, r.h),
                    ));
                }
                if r.lower > r.upper {
                    return Err(parse_error(path, format!("series `{id}`: lower > upper at origin {}", r.origin)));
                }
            }
            if g.len() % horizon != 0 {
                return Err(parse_error(path, format!("series `{id}`: incomplete final block")));
            }
            Ok((id, g, horizon))
        })
        .collect()
}

/// PICP, PINAW and (for the series named in the sidecar) MIOU per series,
/// plus cross-series aggregates.
pub fn cmd_eval(intervals: &Path, oracle: Option<&Path>) -> CliResult<EvalOutput> {
    let rows = read_intervals(intervals)?;
    let sidecar = oracle.map(read_sidecar).transpose()?;
    let mut per_series = Vec::new();
    for (id, group, horizon) in blocks(intervals, &rows)? {
        let ivs: Vec<PredictionInterval> = group
            .iter()
            .map(|r| PredictionInterval {
                lower: r.lower,
                upper: r.upper,
            })
            .collect();
        let y: Vec<f64> = group.iter().map(|r| r.y).collect();
        let oracle_ivs = match &sidecar {
            Some(s) if s.series_id == id => Some(
                group
                    .iter()
                    .map(|r| {
                        let t = r.origin + r.h - 1;
                        s.interval(t).ok_or_else(|| {
                            parse_error(intervals, format!("oracle has no interval at t = {t}"))
                        })
                    })
                    .collect::<CliResult<Vec<_>>>()?,
            ),
            _ => None,
        };
        let report = evaluate_blocks(&ivs, &y, oracle_ivs.as_deref(), horizon)?;
        per_series.push(SeriesReport { series_id: id, report });
    }
    let reports: Vec<EvalReport> = per_series.iter().map(|s| s.report.clone()).collect();
    Ok(EvalOutput {
        aggregates: aggregate_star(&reports)?,
        per_series,
    })
}
