use std::path::PathBuf;

use privgaze_core::CoreError;
use privgaze_nn::NnError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("training diverged in the {stage} stage at epoch {epoch}, step {step}: {reason}; snapshot written to {}", snapshot.display())]
    Diverged {
        stage: String,
        epoch: usize,
        step: u64,
        reason: String,
        snapshot: PathBuf,
    },
    #[error("{0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, TrainError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> TrainError {
    let path = path.into();
    move |source| TrainError::Io { path, source }
}
