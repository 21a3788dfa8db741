//! Command implementations behind the `veritas` binary: train, evaluate,
//! predict and vectorize, driven by a flat [`RunConfig`].

pub mod commands;
pub mod config;

pub use config::RunConfig;

use thiserror::Error;
use veritas_core::ingest::IngestError;
use veritas_core::textpipe::TextError;
use veritas_core::train::TrainError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("{0}")]
    Input(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// 3 for a diverged run, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Train(TrainError::NonFiniteLoss { .. }) => 3,
            _ => 2,
        }
    }
}
