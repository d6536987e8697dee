//! Experiment configuration: built-in defaults, an optional flat key-value
//! file, then command-line flags, later sources winning key by key.

use std::path::{Path, PathBuf};

use conformal_forecast::data::{CsvLayout, ScaleConvention, SyntheticConfig};
use conformal_forecast::model::TrainConfig;
use conformal_forecast::pipelines::{Method, PipelineParams};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Where the series come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Csv { path: PathBuf, layout: CsvLayout },
    Synthetic(SyntheticConfig),
}

/// Fully resolved settings of one run. Embedded verbatim in the results so
/// a run can be repeated from its own output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub method: Method,
    pub data: DataSource,
    pub alpha: f64,
    pub p: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    #[serde(rename = "B")]
    pub n_bootstrap: usize,
    #[serde(rename = "T")]
    pub window: usize,
    pub n_test: usize,
    pub epochs: usize,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub cal_fraction: f64,
    pub seed: u64,
    /// Forces the ACI step size instead of `1 / max(T, |scores|)`.
    pub gamma: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let params = PipelineParams::default();
        let train = TrainConfig::default();
        Self {
            method: Method::Aenbmimocqr,
            data: DataSource::Synthetic(SyntheticConfig::default()),
            alpha: params.alpha,
            p: params.lags,
            horizon: params.horizon,
            n_bootstrap: params.n_bootstrap,
            window: params.window,
            n_test: 390,
            epochs: train.epochs,
            hidden: train.hidden,
            learning_rate: train.learning_rate,
            cal_fraction: params.cal_fraction,
            seed: 0,
            gamma: None,
        }
    }
}

impl ExperimentConfig {
    /// Pipeline parameters with the given (per-series) seed.
    pub fn pipeline_params(&self, seed: u64) -> PipelineParams {
        PipelineParams {
            lags: self.p,
            horizon: self.horizon,
            alpha: self.alpha,
            n_bootstrap: self.n_bootstrap,
            window: self.window,
            cal_fraction: self.cal_fraction,
            seed,
            gamma: self.gamma,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            hidden: self.hidden.clone(),
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let invalid = |e: conformal_forecast::Error| CliError::Validation(e.to_string());
        self.pipeline_params(self.seed).validate().map_err(invalid)?;
        self.train_config().validate().map_err(invalid)?;
        if self.n_test == 0 || self.n_test % self.horizon != 0 {
            return Err(CliError::Validation(format!(
                "`n-test` = {} must be a positive multiple of `H` = {}",
                self.n_test, self.horizon
            )));
        }
        if let DataSource::Synthetic(s) = &self.data {
            s.validate().map_err(invalid)?;
            if s.length <= self.n_test {
                return Err(CliError::Validation(format!(
                    "`synth-length` = {} leaves no training data for `n-test` = {}",
                    s.length, self.n_test
                )));
            }
        }
        Ok(())
    }
}

/// Every setting as an optional override. The same keys are accepted in
/// the config file and as `--key` flags.
#[derive(Debug, Clone, Default, PartialEq, clap::Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    /// aenbmimocqr, mimocqr, enbpi or enbcqr.
    #[arg(long)]
    pub method: Option<Method>,
    /// CSV file with the series to evaluate.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// CSV layout: wide (one column per series) or long (id, t, value).
    #[arg(long)]
    pub layout: Option<CsvLayout>,
    /// Use the built-in synthetic process instead of a CSV file.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub synthetic: Option<bool>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Number of lags.
    #[arg(long)]
    pub p: Option<usize>,
    /// Forecast horizon.
    #[arg(long = "H")]
    #[serde(rename = "H")]
    pub horizon: Option<usize>,
    /// Ensemble size.
    #[arg(long = "B")]
    #[serde(rename = "B")]
    pub n_bootstrap: Option<usize>,
    /// Score window size of the adaptive method.
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub window: Option<usize>,
    #[arg(long = "n-test")]
    #[serde(rename = "n-test")]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long = "learning-rate")]
    #[serde(rename = "learning-rate")]
    pub learning_rate: Option<f64>,
    /// Share of training rows held out for calibration (mimocqr).
    #[arg(long = "cal-fraction")]
    #[serde(rename = "cal-fraction")]
    pub cal_fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Length of the synthetic series.
    #[arg(long = "synth-length")]
    #[serde(rename = "synth-length")]
    pub synth_length: Option<usize>,
    /// Synthetic noise scale convention: std_dev or variance.
    #[arg(long)]
    pub scale: Option<ScaleConvention>,
}

impl Overrides {
    /// Reads a flat `key = value` file.
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {}", path.display(), e.message())))
    }

    /// Keeps every key set in `self` and fills the rest from `lower`.
    pub fn over(self, lower: Overrides) -> Overrides {
        Overrides {
            method: self.method.or(lower.method),
            data: self.data.or(lower.data),
            layout: self.layout.or(lower.layout),
            synthetic: self.synthetic.or(lower.synthetic),
            alpha: self.alpha.or(lower.alpha),
            p: self.p.or(lower.p),
            horizon: self.horizon.or(lower.horizon),
            n_bootstrap: self.n_bootstrap.or(lower.n_bootstrap),
            window: self.window.or(lower.window),
            n_test: self.n_test.or(lower.n_test),
            epochs: self.epochs.or(lower.epochs),
            hidden: self.hidden.or(lower.hidden),
            learning_rate: self.learning_rate.or(lower.learning_rate),
            cal_fraction: self.cal_fraction.or(lower.cal_fraction),
            seed: self.seed.or(lower.seed),
            gamma: self.gamma.or(lower.gamma),
            synth_length: self.synth_length.or(lower.synth_length),
            scale: self.scale.or(lower.scale),
        }
    }

    /// Applies the overrides to the defaults and validates the result.
    pub fn resolve(self) -> CliResult<ExperimentConfig> {
        let d = ExperimentConfig::default();
        let seed = self.seed.unwrap_or(d.seed);
        let data = match (self.data, self.synthetic.unwrap_or(false)) {
            (Some(_), true) => {
                return Err(CliError::Validation(
                    "`data` and `synthetic` are mutually exclusive".into(),
                ))
            }
            (Some(path), false) => DataSource::Csv {
                path,
                layout: self.layout.unwrap_or(CsvLayout::Wide),
            },
            (None, true) => {
                let base = SyntheticConfig::default();
                DataSource::Synthetic(SyntheticConfig {
                    seed,
                    length: self.synth_length.unwrap_or(base.length),
                    scale: self.scale.unwrap_or(base.scale),
                    ..base
                })
            }
            (None, false) => {
                return Err(CliError::Validation(
                    "one of `data` or `synthetic` is required".into(),
                ))
            }
        };
        let config = ExperimentConfig {
            method: self.method.unwrap_or(d.method),
            data,
            alpha: self.alpha.unwrap_or(d.alpha),
            p: self.p.unwrap_or(d.p),
            horizon: self.horizon.unwrap_or(d.horizon),
            n_bootstrap: self.n_bootstrap.unwrap_or(d.n_bootstrap),
            window: self.window.unwrap_or(d.window),
            n_test: self.n_test.unwrap_or(d.n_test),
            epochs: self.epochs.unwrap_or(d.epochs),
            hidden: self.hidden.unwrap_or(d.hidden),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            cal_fraction: self.cal_fraction.unwrap_or(d.cal_fraction),
            seed,
            gamma: self.gamma.or(d.gamma),
        };
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_reference_setup() {
        let c = ExperimentConfig::default();
        assert_eq!(
            (c.alpha, c.p, c.horizon, c.n_bootstrap, c.window, c.n_test),
            (0.1, 40, 30, 10, 100, 390)
        );
        assert_eq!((c.epochs, c.hidden.as_slice()), (1000, &[64, 64][..]));
        c.validate().unwrap();
    }

    #[test]
    fn flags_win_over_file() {
        let file: Overrides = toml::from_str(
            "method = \"enbpi\"\nalpha = 0.2\nH = 5\nn-test = 20\nhidden = [8, 8]\nsynthetic = true\n",
        )
        .unwrap();
        let flags = Overrides {
            alpha: Some(0.05),
            ..Overrides::default()
        };
        let c = flags.over(file).resolve().unwrap();
        assert_eq!(c.method, Method::Enbpi);
        assert_eq!(c.alpha, 0.05);
        assert_eq!((c.horizon, c.n_test), (5, 20));
        assert_eq!(c.hidden, vec![8, 8]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<Overrides>("lags = 3\n").is_err());
    }

    #[test]
    fn invalid_settings_name_the_field() {
        let base = Overrides {
            synthetic: Some(true),
            ..Overrides::default()
        };
        let err = Overrides { n_test: Some(31), ..base.clone() }.resolve().unwrap_err();
        assert!(err.to_string().contains("n-test"), "{err}");
        assert_eq!(err.exit_code(), 2);
        let err = Overrides { alpha: Some(1.5), ..base.clone() }.resolve().unwrap_err();
        assert!(err.to_string().contains("1.5"), "{err}");
        let err = Overrides { n_bootstrap: Some(1), ..base.clone() }.resolve().unwrap_err();
        assert!(err.to_string().contains("`B`"), "{err}");
        let err = Overrides { data: Some("x.csv".into()), ..base }.resolve().unwrap_err();
        assert!(err.to_string().contains("mutually exclusive"));
        assert!(Overrides::default().resolve().is_err());
    }

    #[test]
    fn synthetic_series_follows_the_run_seed() {
        let c = Overrides {
            synthetic: Some(true),
            seed: Some(7),
            ..Overrides::default()
        }
        .resolve()
        .unwrap();
        let DataSource::Synthetic(s) = c.data else { panic!() };
        assert_eq!((s.seed, s.length), (7, 1041));
    }
}
