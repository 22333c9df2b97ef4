//! Config parsing and experiment running behind the `aoi-gateway` binary.

pub mod config;
mod error;
pub mod experiment;

use std::path::Path;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use experiment::{run_experiment, Experiment, Report};

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicates: Option<usize>,
}

/// Process exit status for a finished report: 0, or 3 when a property
/// violation was found.
pub fn exit_status(report: &Report) -> u8 {
    if report.violations.is_empty() {
        0
    } else {
        3
    }
}

/// Reads `path` (or starts from defaults) and applies `overrides`.
pub fn load_config(path: Option<&Path>, overrides: &Overrides) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = overrides.seed {
        cfg.run.seed = seed;
    }
    if let Some(r) = overrides.replicates {
        cfg.run.replicates = r;
    }
    cfg.validate()?;
    Ok(cfg)
}
