use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("query file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] longsynth_core::Error),
    #[error("all {0} repetitions failed")]
    AllFailed(usize),
}

impl HarnessError {
    pub fn input(msg: impl Into<String>) -> Self {
        HarnessError::Input(msg.into())
    }

    /// 2 for bad input, 3 when no repetition succeeded, 1 for output IO.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::AllFailed(_) => 3,
            HarnessError::Write { .. } => 1,
            _ => 2,
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
