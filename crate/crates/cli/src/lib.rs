//! Experiment runner: presets or TOML configs in, run records, curves,
//! solution tables, search exports and comparison tables out.

pub mod compare;
pub mod config;
pub mod run;

use std::path::PathBuf;

pub use compare::{compare, Table};
pub use config::{ExperimentConfig, Mode, SearchSettings};
pub use run::{run, Outcome};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] deqgan::Error),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{0}")]
    Usage(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
