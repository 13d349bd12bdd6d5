//! Experiment runner for the chemotaxis laboratory: single runs, parameter
//! sweeps and plot-ready reports, all driven by TOML configs.
//!
//! Exit codes are part of the contract: 0 when every requested check
//! passes, 2 on a failed check, 3 when the solver diverges, 4 on a config
//! or I/O error.

use std::path::{Path, PathBuf};

pub mod config;
pub mod report;
pub mod run;
pub mod sweep;

pub use config::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Exit {
    Pass = 0,
    CheckFailed = 2,
    Diverged = 3,
    ConfigError = 4,
}

impl Exit {
    pub fn code(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("corrupt output {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit(&self) -> Exit {
        Exit::ConfigError
    }
}

/// Seventeen significant digits, enough to round-trip any f64.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}
