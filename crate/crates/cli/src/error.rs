use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] adecot::Error),
    #[error("{0}")]
    Search(#[from] adecot::search::SearchFailure),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json output: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0} invariant check(s) failed")]
    Verify(usize),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for configuration problems, 3 for backend and run failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Invalid(_) => 2,
            CliError::Core(adecot::Error::Config(_)) => 2,
            CliError::Search(f) if matches!(f.error, adecot::Error::Config(_)) => 2,
            _ => 3,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
