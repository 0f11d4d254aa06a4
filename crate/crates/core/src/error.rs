use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A layer stack or split that cannot describe a valid model.
    #[error("invalid model spec: {0}")]
    Spec(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    Numeric(String),

    /// Aggregation weights that do not form a convex combination.
    #[error("invalid weights: {0}")]
    Weights(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("bad IDX file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("missing log data: {0}")]
    MissingLog(String),

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            e @ Error::AtStep { .. } => e,
            other => Error::AtStep {
                step,
                source: Box::new(other),
            },
        }
    }
}
