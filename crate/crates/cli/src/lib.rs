//! Benchmark harness: runs declarative experiment configs through the
//! estimators of the `twocultures` crate and writes comparison tables,
//! ROC polylines and variable-selection studies.

pub mod config;
pub mod fetch;
pub mod report;
pub mod run;
pub mod varstudy;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{ConfigError, ExperimentConfig};
pub use run::{run_experiment, ExperimentReport, RunOptions};
pub use varstudy::{variable_study, VarStudy};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}", fetch::instructions(.dataset, .path))]
    MissingData { dataset: String, path: PathBuf },

    #[error("invalid config {path}: {error}", path = .1.display(), error = .0)]
    Config(ConfigError, PathBuf),

    #[error(transparent)]
    Core(#[from] twocultures::error::Error),

    #[error("{0}")]
    Io(String),

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// Process exit status: 2 for missing data, 3 for config errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingData { .. } => 2,
            CliError::Config(..) => 3,
            _ => 1,
        }
    }
}
