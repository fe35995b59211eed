use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed archive content. `file` names the offending file.
    #[error("archive error in {file}: {message}")]
    Archive { file: PathBuf, message: String },

    #[error("invalid value for `{field}`: {message}")]
    InvalidConfig { field: String, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error(
        "composite covariance is rank deficient: smallest eigenvalue {smallest:e} below {threshold:e} (1e-10 x largest)"
    )]
    RankDeficient { smallest: f64, threshold: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("criterion undefined: {0}")]
    CriterionUndefined(String),

    #[error("channel {channel}: {source}")]
    Channel {
        channel: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("all {} search candidates failed: {}", .0.len(), summarize_failures(.0))]
    AllCandidatesFailed(Vec<(usize, String)>),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

fn summarize_failures(failures: &[(usize, String)]) -> String {
    failures
        .iter()
        .map(|(i, msg)| format!("[{i}] {msg}"))
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical kind (as opposed to usage or I/O).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::RankDeficient { .. }
            | Error::Singular(_)
            | Error::Degenerate(_)
            | Error::CriterionUndefined(_)
            | Error::AllCandidatesFailed(_) => true,
            Error::Channel { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
