//! Experiment orchestration for the `ntklab` binary.
//!
//! Every experiment is a pure function of its resolved [`config::Config`]:
//! outputs are written atomically into one directory together with a
//! `manifest.txt` of SHA-256 checksums and an echo of the configuration.

pub mod commands;
pub mod config;
pub mod experiments;
pub mod output;
mod plots;

use std::fmt;

pub const VERSION: &str = env!("NTKLAB_VERSION");

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration; exit code 1.
    Usage(String),
    Core(ntklab::Error),
    Io(std::io::Error),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numeric() => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ntklab::Error> for CliError {
    fn from(e: ntklab::Error) -> Self {
        match e {
            ntklab::Error::InvalidArgument(m) => CliError::Usage(m),
            other => CliError::Core(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}
