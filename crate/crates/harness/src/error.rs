use std::io;
use std::path::{Path, PathBuf};

use led_core::LedError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Bad flags, bad config values or missing inputs.
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] LedError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, HarnessError>;

impl HarnessError {
    /// 2 for usage and validation problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) | HarnessError::Json { .. } => 2,
            HarnessError::Core(
                LedError::InvalidConfig(_) | LedError::UnsupportedSampler(_) | LedError::Shape(_),
            ) => 2,
            HarnessError::Core(_) | HarnessError::Io { .. } => 1,
        }
    }
}

pub fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(HarnessError::Usage(msg.into()))
}

pub fn io_at(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn json_at(path: &Path) -> impl FnOnce(serde_json::Error) -> HarnessError + '_ {
    move |source| HarnessError::Json {
        path: path.to_path_buf(),
        source,
    }
}
