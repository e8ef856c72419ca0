//! Command implementations behind the `spectrans` binary. Each command reads a
//! [`config::RunConfig`], writes its outputs plus the resolved configuration
//! into an output directory, and reports failures as a [`CliError`] carrying
//! the process exit code.

pub mod commands;
pub mod config;

use std::path::Path;

use serde::Serialize;
use spectrans_core::autodiff::AutodiffError;
use spectrans_core::Error;
use thiserror::Error as ThisError;

#[derive(Debug, ThisError)]
pub enum CliError {
    /// Usage or configuration problem (exit 2).
    #[error("{0}")]
    Config(String),
    /// Unreadable or unwritable file (exit 3).
    #[error("{0}")]
    Io(String),
    /// Non-finite values; training aborted (exit 4).
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Io(_) | Error::Format(_) => CliError::Io(msg),
            Error::Numeric(_) => CliError::Numeric(msg),
            Error::Autodiff(AutodiffError::Io(_) | AutodiffError::Format(_)) => CliError::Io(msg),
            Error::Config(_)
            | Error::Contract(_)
            | Error::Parse { .. }
            | Error::Range(_)
            | Error::Unsupported(_)
            | Error::DegenerateInput(_)
            | Error::Json(_)
            | Error::Autodiff(_) => CliError::Config(msg),
        }
    }
}

/// Shorthand for a configuration error.
pub fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    write_text(path, &(text + "\n"))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
