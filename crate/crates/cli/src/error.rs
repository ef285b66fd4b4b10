use std::path::{Path, PathBuf};

use cqrt_core::fpe::FpeError;
use cqrt_core::sde::{ConfigError, SdeError};
use cqrt_core::stats::StatsError;
use thiserror::Error;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Malformed { .. } => EXIT_USAGE,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Io { .. } => EXIT_IO,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn malformed(path: &Path, line: usize, message: impl Into<String>) -> Self {
        CliError::Malformed {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }
}

pub fn usage(message: impl Into<String>) -> CliError {
    CliError::Usage(message.into())
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<SdeError> for CliError {
    fn from(e: SdeError) -> Self {
        match e {
            SdeError::Config(c) => c.into(),
            SdeError::ThreadPool(_) => CliError::Usage(e.to_string()),
            SdeError::TooManyDiverged { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<FpeError> for CliError {
    fn from(e: FpeError) -> Self {
        match e {
            FpeError::InstabilityDetected { .. } | FpeError::ZeroMass => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::EmptyResult
            | StatsError::NoSamples
            | StatsError::AllOutOfRange(_)
            | StatsError::DegenerateVariance => CliError::Numerical(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}
