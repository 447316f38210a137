//! Library half of the `qcorr` binary: scenario parsing, sweep execution,
//! and deterministic CSV/JSON output. The binary is a thin clap wrapper so
//! tests can drive everything through these functions.

pub mod commands;
pub mod config;
pub mod io;

pub use commands::{cmd_psd, cmd_run, cmd_spectrum, cmd_validate, RunReport, RunRequest};
pub use config::{parse_scenario, OutputFormat, ScenarioConfig};

/// Failures are split by exit code: IO problems exit 2, configuration and
/// numerical problems exit 3.
#[derive(Debug)]
pub enum CliError {
    Config {
        line: Option<usize>,
        message: String,
    },
    Io(std::io::Error),
    Core(qcorr_core::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config {
                line: Some(n),
                message,
            } => {
                write!(f, "config error (line {n}): {message}")
            }
            CliError::Config {
                line: None,
                message,
            } => write!(f, "config error: {message}"),
            CliError::Io(e) => write!(f, "io error: {e}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CliError::Io(e) => Some(e),
            CliError::Core(e) => Some(e),
            CliError::Config { .. } => None,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<qcorr_core::Error> for CliError {
    fn from(e: qcorr_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn config(line: impl Into<Option<usize>>, message: impl Into<String>) -> Self {
        CliError::Config {
            line: line.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 2,
            CliError::Config { .. } | CliError::Core(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
