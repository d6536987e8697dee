//! Batch experiment runner around [`conformal_forecast`].
//!
//! Three commands:
//!
//! * `run` backtests one method over a CSV file or the synthetic process and
//!   writes `results.json`, `intervals.csv` and `timing.json`;
//! * `synth` writes a synthetic series with its oracle sidecar;
//! * `eval` recomputes the metrics from an intervals file.

pub mod config;
pub mod error;
pub mod eval;
pub mod run;
pub mod synth;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use conformal_forecast::data::{ScaleConvention, SyntheticConfig};

pub use config::{DataSource, ExperimentConfig, Overrides};
pub use error::{CliError, CliResult};
pub use eval::cmd_eval;
pub use run::{cmd_run, run_experiment};
pub use synth::cmd_synth;

#[derive(Debug, Parser)]
#[command(name = "cpforecast", version, about = "Conformal multi-step prediction intervals")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Backtest a method and write results.
    Run {
        /// Flat `key = value` file; flags override its entries.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (defaults to all cores). Does not affect results.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Generate a synthetic series and its oracle sidecar.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV path; the sidecar goes next to it as `<stem>.oracle.json`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1041)]
        length: usize,
        #[arg(long, default_value = "std_dev")]
        scale: ScaleConvention,
        /// Miscoverage of the stored oracle bounds.
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
    },
    /// Recompute PICP, PINAW and MIOU from an intervals file.
    Eval {
        #[arg(long)]
        intervals: PathBuf,
        /// Oracle sidecar of a synthetic series.
        #[arg(long)]
        oracle: Option<PathBuf>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> CliResult<T> + Send,
) -> CliResult<T> {
    match threads {
        None => f(),
        Some(0) => Err(CliError::Validation("`threads` must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?
            .install(f),
    }
}

/// Executes a parsed command line.
pub fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run {
            config,
            overrides,
            out,
            threads,
        } => {
            let file = config
                .as_deref()
                .map(Overrides::from_file)
                .transpose()?
                .unwrap_or_default();
            let resolved = overrides.over(file).resolve()?;
            let output = with_threads(threads, || cmd_run(&resolved, &out))?;
            let a = &output.aggregates;
            eprintln!(
                "{}: PICP* {:.4}  PINAW* {:.4}{}  ({} series) -> {}",
                resolved.method,
                a.picp_star,
                a.pinaw_star,
                a.miou_mean.map(|m| format!("  MIOU {m:.4}")).unwrap_or_default(),
                a.n_series,
                output.results.display()
            );
            Ok(())
        }
        Command::Synth {
            seed,
            out,
            length,
            scale,
            alpha,
        } => {
            let config = SyntheticConfig {
                seed,
                length,
                scale,
                ..SyntheticConfig::default()
            };
            let sidecar = cmd_synth(&config, alpha, &out)?;
            eprintln!("wrote {} and {}", out.display(), sidecar.display());
            Ok(())
        }
        Command::Eval {
            intervals,
            oracle,
            out,
        } => {
            let report = cmd_eval(&intervals, oracle.as_deref())?;
            match out {
                Some(path) => run::write_json(&path, &report),
                None => {
                    println!("{}", serde_json::to_string_pretty(&report)?);
                    Ok(())
                }
            }
        }
    }
}
