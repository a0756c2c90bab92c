//! Command-line runners for the estimator: data simulation, estimation,
//! consistency sweeps, prediction and noise identification.
//!
//! Every command writes its artefacts plus a `manifest.json` into the output
//! directory. Outputs depend only on the configuration file and the seed.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use thiserror::Error;

pub use commands::{consistency, estimate, noise, predict, simulate};
pub use config::{LoadedConfig, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration, flags or input files.
    #[error("{0}")]
    Config(String),
    /// The computation ran but did not succeed.
    #[error("{0}")]
    Numeric(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<lqt_ioc::Error> for CliError {
    fn from(e: lqt_ioc::Error) -> Self {
        use lqt_ioc::Error as E;
        match e {
            E::Numeric(_) | E::Solver(_) | E::Structural(_) => CliError::Numeric(e.to_string()),
            E::Io(io) => CliError::Io(io),
            _ => CliError::Config(e.to_string()),
        }
    }
}

/// Flags shared by every subcommand, after merging with the configuration.
#[derive(Debug, Clone)]
pub struct Options {
    pub out: PathBuf,
    pub seed: u64,
    pub dataset: Option<PathBuf>,
    pub solution: Option<PathBuf>,
}

impl Options {
    /// `--out` wins over `out_dir`, `--seed` over `seed`.
    pub fn resolve(
        cfg: &RunConfig,
        out: Option<PathBuf>,
        seed: Option<u64>,
        dataset: Option<PathBuf>,
        solution: Option<PathBuf>,
    ) -> Result<Self, CliError> {
        let out = out
            .or_else(|| cfg.out_dir.clone())
            .ok_or_else(|| CliError::Config("no output directory: pass --out or set out_dir".into()))?;
        Ok(Self { out, seed: seed.unwrap_or(cfg.seed), dataset, solution })
    }

    pub(crate) fn dataset(&self) -> Result<&PathBuf, CliError> {
        let p = self.dataset.as_ref().ok_or_else(|| CliError::Config("--dataset is required".into()))?;
        if !p.is_file() {
            return Err(CliError::Config(format!("dataset `{}` does not exist", p.display())));
        }
        Ok(p)
    }

    pub(crate) fn solution(&self) -> Result<&PathBuf, CliError> {
        let p = self.solution.as_ref().ok_or_else(|| CliError::Config("--solution is required".into()))?;
        if !p.is_file() {
            return Err(CliError::Config(format!("solution `{}` does not exist", p.display())));
        }
        Ok(p)
    }
}
