use std::path::PathBuf;

use crate::autodiff::ParamId;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller passed an argument that violates an operation's precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// An experiment or training configuration is invalid.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An internal contract was violated (e.g. a non-scalar loss handed to `backward`).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A gradient or loss stopped being finite during training.
    #[error("non-finite value at iteration {iteration}: {what}")]
    NonFinite { iteration: usize, what: String },

    /// A gradient entry for `param` is NaN or infinite.
    #[error("non-finite gradient for parameter {param:?}")]
    NonFiniteGradient { param: ParamId },

    /// A numerical solver failed to reach its target.
    #[error("solver failure: {0}")]
    Solver(String),

    /// Ground truth was requested but is not available.
    #[error("ground truth for {problem} is not cached at {path}; generate it first (e.g. `deqgan oracle --preset {problem}`)")]
    MissingGroundTruth { problem: String, path: PathBuf },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
