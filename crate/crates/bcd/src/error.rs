use std::path::PathBuf;

use thiserror::Error;

/// Exit codes of the `bcd` binary.
pub mod exit {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const RANK: i32 = 3;
    pub const DIVERGENCE: i32 = 4;
    pub const CRITERION: i32 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] bcd_core::Error),
    #[error("criterion failed: {0}")]
    Criterion(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CliError::Parse { path: path.into(), message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        use bcd_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Parse { .. } => exit::CONFIG,
            CliError::Core(E::RankDeficient { .. }) => exit::RANK,
            CliError::Core(E::Divergence { .. }) => exit::DIVERGENCE,
            CliError::Core(E::InvalidArgument(_)) => exit::CONFIG,
            CliError::Criterion(_) => exit::CRITERION,
            CliError::Core(_) | CliError::Io { .. } => exit::OTHER,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
