use std::path::Path;

use microtele::network::NetworkError;
use microtele::sweepfit::SweepError;
use microtele::StateError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Binding(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Parse(_) => 2,
            CliError::Binding(_) => 3,
            CliError::Io { .. } => 4,
            CliError::Validation(_) => 5,
            CliError::Failed(_) => 1,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<NetworkError> for CliError {
    fn from(e: NetworkError) -> Self {
        match e {
            NetworkError::Syntax { .. } | NetworkError::Semantic { .. } => {
                CliError::Parse(e.to_string())
            }
            NetworkError::Unbound(_) | NetworkError::NonFinite { .. } => {
                CliError::Binding(e.to_string())
            }
            NetworkError::State(s) => s.into(),
        }
    }
}

impl From<StateError> for CliError {
    fn from(e: StateError) -> Self {
        CliError::Failed(e.to_string())
    }
}

impl From<SweepError> for CliError {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Io(source) => CliError::Io {
                path: "<data>".into(),
                source,
            },
            SweepError::UnknownAxis(_)
            | SweepError::DuplicateAxis(_)
            | SweepError::EmptyAxis(_)
            | SweepError::Grid(..) => CliError::Usage(e.to_string()),
            SweepError::MissingColumn { .. }
            | SweepError::Row { .. }
            | SweepError::Empty(_)
            | SweepError::Csv(_) => CliError::Parse(e.to_string()),
            SweepError::State(s) => s.into(),
            other => CliError::Failed(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
