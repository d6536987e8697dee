//! The `run` command: backtest one method over every series of a data source
//! and write results, interval rows and timing.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use conformal_forecast::data::{
    gen_synthetic, load_csv, write_wide_csv, OracleIntervalSet, OracleSidecar,
};
use conformal_forecast::metrics::{aggregate_star, evaluate_blocks, Aggregate, EvalReport};
use conformal_forecast::model::NetLearner;
use conformal_forecast::pipelines::{
    run_aenbmimocqr, run_enbcqr, run_enbpi, run_mimocqr, BacktestStream, Method, RunResult,
};
use conformal_forecast::rng::series_seed;
use conformal_forecast::{PredictionInterval, TimeSeries};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DataSource, ExperimentConfig};
use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

pub const RESULTS_FILE: &str = "results.json";
pub const INTERVALS_FILE: &str = "intervals.csv";
pub const TIMING_FILE: &str = "timing.json";
pub const SERIES_FILE: &str = "series.csv";
pub const ORACLE_FILE: &str = "series.oracle.json";

/// Evaluation and bookkeeping for one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub series_id: String,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub report: EvalReport,
    pub skipped_oob_rows: usize,
    pub initial_scores: usize,
    pub gamma: Option<f64>,
}

/// Per-block state of one series, for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesTrace {
    pub series_id: String,
    pub origins: Vec<usize>,
    pub alpha: Option<Vec<Vec<f64>>>,
    pub qhat: Vec<Vec<f64>>,
    pub window: Vec<Vec<usize>>,
}

/// Contents of the results file. Nothing in here depends on the clock or
/// on thread scheduling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Results {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub per_series: Vec<SeriesSummary>,
    pub aggregates: Aggregate,
    pub traces: Vec<SeriesTrace>,
}

/// One series' raw run next to its oracle intervals, if known.
#[derive(Debug, Clone)]
pub struct SeriesRun {
    pub series_id: String,
    pub run: RunResult,
    pub oracle: Option<Vec<PredictionInterval>>,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub results: Results,
    pub runs: Vec<SeriesRun>,
    /// The generated series and its oracle sidecar for synthetic sources.
    pub synthetic: Option<(TimeSeries, OracleSidecar)>,
}

/// One row of the intervals file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRow {
    pub series: String,
    /// 1-based time index of the block's first target.
    pub origin: usize,
    /// 1-based step within the block.
    pub h: usize,
    pub lower: f64,
    pub upper: f64,
    pub y: f64,
    pub covered: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Timing {
    started_unix_seconds: f64,
    wall_seconds: f64,
}

fn oracle_for(
    run: &RunResult,
    oracle: &OracleIntervalSet,
    alpha: f64,
) -> conformal_forecast::Result<Vec<PredictionInterval>> {
    let mut out = Vec::new();
    for rec in &run.per_origin {
        for h in 0..rec.block.intervals.len() {
            let t = rec.block.origin + h;
            out.push(oracle.interval(t, alpha).ok_or_else(|| {
                conformal_forecast::Error::Protocol(format!("no oracle interval at t = {t}"))
            })?);
        }
    }
    Ok(out)
}

fn run_series(
    config: &ExperimentConfig,
    series: &TimeSeries,
    oracle: Option<&OracleIntervalSet>,
) -> conformal_forecast::Result<(SeriesRun, SeriesSummary)> {
    let seed = series_seed(config.seed, series.id());
    let params = config.pipeline_params(seed);
    let train = config.train_config();
    let quantile = |tau: f64| NetLearner::quantile(tau, train.clone());
    let (lo, hi) = (config.alpha / 2.0, 1.0 - config.alpha / 2.0);
    let mut stream = BacktestStream::new(series, config.n_test, config.horizon)?;
    let run = match config.method {
        Method::Aenbmimocqr => run_aenbmimocqr(&mut stream, &params, quantile(lo)?, quantile(hi)?)?,
        Method::Mimocqr => run_mimocqr(&mut stream, &params, quantile(lo)?, quantile(hi)?)?,
        Method::Enbpi => run_enbpi(&mut stream, &params, NetLearner::squared_error(train.clone()))?,
        Method::Enbcqr => run_enbcqr(
            &mut stream,
            &params,
            quantile(lo)?,
            quantile(0.5)?,
            quantile(hi)?,
        )?,
    };
    let oracle = oracle.map(|o| oracle_for(&run, o, config.alpha)).transpose()?;
    let report = evaluate_blocks(&run.intervals(), &run.truth(), oracle.as_deref(), config.horizon)?;
    let summary = SeriesSummary {
        series_id: series.id().to_string(),
        seed,
        n_train: series.len() - config.n_test,
        n_test: config.n_test,
        report,
        skipped_oob_rows: run.skipped_oob_rows,
        initial_scores: run.initial_scores,
        gamma: run.gamma,
    };
    Ok((
        SeriesRun {
            series_id: series.id().to_string(),
            run,
            oracle,
        },
        summary,
    ))
}

/// Runs the configured method on every series. Series run in parallel and
/// are merged in id order.
pub fn run_experiment(config: &ExperimentConfig) -> CliResult<Experiment> {
    config.validate()?;
    let (mut series, oracle, synthetic) = match &config.data {
        DataSource::Csv { path, layout } => {
            let series = load_csv(path, *layout).map_err(|e| match e {
                conformal_forecast::Error::Io(source) => CliError::Io {
                    path: path.clone(),
                    source,
                },
                other => other.into(),
            })?;
            (series, None, None)
        }
        DataSource::Synthetic(s) => {
            let (series, oracle) = gen_synthetic(s)?;
            let sidecar = OracleSidecar::new(series.id(), s, &oracle, config.alpha);
            (vec![series.clone()], Some(oracle), Some((series, sidecar)))
        }
    };
    series.sort_by(|a, b| a.id().cmp(b.id()));
    if let Some(w) = series.windows(2).find(|w| w[0].id() == w[1].id()) {
        return Err(CliError::Validation(format!("duplicate series id `{}`", w[0].id())));
    }
    let outcomes: Vec<_> = series
        .par_iter()
        .map(|s| {
            run_series(config, s, oracle.as_ref()).map_err(|source| CliError::Series {
                id: s.id().to_string(),
                source,
            })
        })
        .collect();
    let (runs, per_series): (Vec<_>, Vec<_>) =
        outcomes.into_iter().collect::<CliResult<Vec<_>>>()?.into_iter().unzip();
    let reports: Vec<EvalReport> = per_series.iter().map(|s| s.report.clone()).collect();
    let traces = runs
        .iter()
        .map(|r| SeriesTrace {
            series_id: r.series_id.clone(),
            origins: r.run.per_origin.iter().map(|o| o.block.origin).collect(),
            alpha: r.run.alpha_trace.clone(),
            qhat: r.run.qhat_trace.clone(),
            window: r.run.window_trace.clone(),
        })
        .collect();
    Ok(Experiment {
        results: Results {
            schema_version: SCHEMA_VERSION,
            config: config.clone(),
            per_series,
            aggregates: aggregate_star(&reports)?,
            traces,
        },
        runs,
        synthetic,
    })
}

/// Interval rows of every series, series-major then origin then step.
pub fn interval_rows(runs: &[SeriesRun]) -> Vec<IntervalRow> {
    let mut rows = Vec::new();
    for r in runs {
        for rec in &r.run.per_origin {
            for (h, (iv, &y)) in rec.block.intervals.iter().zip(&rec.truth).enumerate() {
                rows.push(IntervalRow {
                    series: r.series_id.clone(),
                    origin: rec.block.origin,
                    h: h + 1,
                    lower: iv.lower,
                    upper: iv.upper,
                    y,
                    covered: iv.contains(y),
                });
            }
        }
    }
    rows
}

pub fn write_intervals(path: &Path, rows: &[IntervalRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(CliError::io(path))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::Parse {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(CliError::io(path))
}

pub fn read_results(path: &Path) -> CliResult<Results> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    Ok(serde_json::from_str(&text)?)
}

/// Files written by [`cmd_run`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub results: PathBuf,
    pub intervals: PathBuf,
    pub timing: PathBuf,
    pub series: Option<PathBuf>,
    pub oracle: Option<PathBuf>,
    pub aggregates: Aggregate,
}

/// Runs an experiment and writes its artifacts into `out_dir`.
pub fn cmd_run(config: &ExperimentConfig, out_dir: &Path) -> CliResult<RunOutput> {
    config.validate()?;
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    let clock = Instant::now();
    let experiment = run_experiment(config)?;
    let wall = clock.elapsed().as_secs_f64();

    fs::create_dir_all(out_dir).map_err(CliError::io(out_dir))?;
    let results = out_dir.join(RESULTS_FILE);
    write_json(&results, &experiment.results)?;
    let intervals = out_dir.join(INTERVALS_FILE);
    write_intervals(&intervals, &interval_rows(&experiment.runs))?;
    let timing = out_dir.join(TIMING_FILE);
    write_json(
        &timing,
        &Timing {
            started_unix_seconds: started,
            wall_seconds: wall,
        },
    )?;
    let (series, oracle) = match &experiment.synthetic {
        Some((s, sidecar)) => {
            let series_path = out_dir.join(SERIES_FILE);
            write_wide_csv(&series_path, std::slice::from_ref(s))?;
            let oracle_path = out_dir.join(ORACLE_FILE);
            write_json(&oracle_path, sidecar)?;
            (Some(series_path), Some(oracle_path))
        }
        None => (None, None),
    };
    Ok(RunOutput {
        results,
        intervals,
        timing,
        series,
        oracle,
        aggregates: experiment.results.aggregates,
    })
}
