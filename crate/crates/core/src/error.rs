use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A cluster that cannot supply its token target without replacement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deficit {
    pub cluster: usize,
    pub required: u64,
    pub available: u64,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("constraint violation: {0}")]
    ConstraintViolation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("empty result: {0}")]
    EmptyResult(String),

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("evaluation failed: {message}")]
    Evaluation { message: String, output: String },

    #[error("search aborted in iteration {iteration}: no successful evaluations (state saved to {checkpoint:?})")]
    SearchAborted {
        iteration: usize,
        checkpoint: Option<PathBuf>,
    },

    #[error("incompatible state: {0}")]
    IncompatibleState(String),

    #[error("token shortfall without replacement: {}", format_deficits(.0))]
    Shortfall(Vec<Deficit>),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_deficits(d: &[Deficit]) -> String {
    d.iter()
        .map(|d| {
            format!(
                "cluster {} needs {} tokens, holds {}",
                d.cluster, d.required, d.available
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }

    /// True when the error stems from bad input rather than a runtime failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::ConstraintViolation(_)
                | Error::InvalidArgument(_)
                | Error::Data(_)
                | Error::EmptyResult(_)
                | Error::InsufficientData { .. }
                | Error::IncompatibleState(_)
                | Error::Shortfall(_)
                | Error::Json(_)
        ) || matches!(self, Error::File { source, .. } if source.kind() == std::io::ErrorKind::NotFound)
    }
}
