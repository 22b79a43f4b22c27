use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Structurally malformed input. `path` names the offending element,
    /// e.g. `data[0].paragraphs[2].qas[1].answers`.
    #[error("malformed input at `{path}`: {message}")]
    Format { path: String, message: String },

    /// Records whose answers do not sit verbatim at their recorded offsets,
    /// or whose answers disagree with their `is_impossible` flag.
    #[error("integrity check failed for record(s): {}", .ids.join(", "))]
    Integrity { ids: Vec<String> },

    #[error("duplicate id(s): {}", .0.join(", "))]
    DuplicateIds(Vec<String>),

    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),

    #[error(
        "prediction ids do not match evaluation records (missing: [{}], duplicate: [{}], unknown: [{}])",
        .missing.join(", "), .duplicate.join(", "), .unknown.join(", ")
    )]
    PredictionMismatch {
        missing: Vec<String>,
        duplicate: Vec<String>,
        unknown: Vec<String>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A failed call to an external service. Safe to retry.
    #[error("transport error: {0}")]
    Transport(String),

    #[error("backend error{}: {message}", .record_id.as_ref().map(|id| format!(" on record `{id}`")).unwrap_or_default())]
    Backend {
        record_id: Option<String>,
        message: String,
    },

    #[error("unknown backend `{0}`")]
    UnknownBackend(String),

    /// Failure inside one round of an iterative regime.
    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn backend(message: impl Into<String>) -> Self {
        Error::Backend {
            record_id: None,
            message: message.into(),
        }
    }

    /// Attach a record id to a backend error that does not carry one yet.
    pub fn with_record(self, id: &str) -> Self {
        match self {
            Error::Backend {
                record_id: None,
                message,
            } => Error::Backend {
                record_id: Some(id.to_string()),
                message,
            },
            other => other,
        }
    }

    pub fn is_retryable(&self) -> bool {
        match self {
            Error::Round { source, .. } => source.is_retryable(),
            other => matches!(other, Error::Transport(_)),
        }
    }

    /// True for failures of a model, translator or other external backend
    /// rather than of the caller's inputs.
    pub fn is_backend_failure(&self) -> bool {
        match self {
            Error::Round { source, .. } => source.is_backend_failure(),
            other => matches!(other, Error::Transport(_) | Error::Backend { .. }),
        }
    }
}
