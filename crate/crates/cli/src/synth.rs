//! The `synth` command: write a synthetic series and its oracle sidecar.

use std::path::{Path, PathBuf};

use conformal_forecast::data::{gen_synthetic, write_wide_csv, OracleSidecar, SyntheticConfig};

use crate::error::{CliError, CliResult};
use crate::run::write_json;

/// `series.csv` -> `series.oracle.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("oracle.json")
}

/// Writes the series CSV at `out` and the sidecar next to it; returns the
/// sidecar path.
pub fn cmd_synth(config: &SyntheticConfig, alpha: f64, out: &Path) -> CliResult<PathBuf> {
    config
        .validate()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::Validation(format!("`alpha` = {alpha} must lie in (0, 1)")));
    }
    let (series, oracle) = gen_synthetic(config)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    write_wide_csv(out, std::slice::from_ref(&series))?;
    let sidecar = sidecar_path(out);
    write_json(&sidecar, &OracleSidecar::new(series.id(), config, &oracle, alpha))?;
    Ok(sidecar)
}
