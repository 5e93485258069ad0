//! Library side of the `gsd` command: config loading, the warp checks and
//! one function per subcommand.

pub mod checks;
pub mod commands;
pub mod config;

use thiserror::Error;

/// Failures of a command, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("assertion failed: {0}")]
    Assertion(String),
    #[error("numerical divergence: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Io(_) => 3,
            Self::Assertion(_) => 4,
            Self::Numeric(_) => 5,
        }
    }
}

impl From<gsd_core::Error> for CliError {
    fn from(e: gsd_core::Error) -> Self {
        use gsd_core::Error as E;
        match e {
            E::Io(_) | E::Format(_) => Self::Io(e.to_string()),
            E::NumericalDivergence { .. } => Self::Numeric(e.to_string()),
            _ => Self::Config(e.to_string()),
        }
    }
}
