use std::path::PathBuf;

use crate::numerics::NumericsError;

/// Coarse error class; doubles as the CLI exit-code contract.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numeric,
    Io,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 2,
            ErrorCategory::Data => 3,
            ErrorCategory::Numeric => 4,
            ErrorCategory::Io => 5,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{file}:{line}: {message}")]
    Parse { file: String, line: u64, message: String },

    #[error("battery {battery} cycle {cycle}: {message}")]
    InvalidCycle {
        battery: String,
        cycle: u32,
        message: String,
    },

    #[error("battery {battery} cycle {cycle} has {len} samples, more than the pad length {pad_len}")]
    OverlongCycle {
        battery: String,
        cycle: u32,
        len: usize,
        pad_len: usize,
    },

    #[error("feature `{0}` is constant over the training split; cannot min-max normalize")]
    DegenerateFeature(&'static str),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error(transparent)]
    Numerics(#[from] NumericsError),

    #[error("shape chain broken at {stage}: expected {expected:?}, got {actual:?}")]
    ShapeChain {
        stage: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("non-finite loss at epoch {epoch}, batch {batch}; consider enabling gradient clipping (grad_clip = 1.0)")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) => ErrorCategory::Config,
            Error::Parse { .. }
            | Error::InvalidCycle { .. }
            | Error::OverlongCycle { .. }
            | Error::DegenerateFeature(_)
            | Error::Domain(_)
            | Error::Checkpoint(_) => ErrorCategory::Data,
            Error::Contract(_) | Error::Numerics(_) | Error::ShapeChain { .. } | Error::NonFiniteLoss { .. } => {
                ErrorCategory::Numeric
            }
            Error::Io { .. } => ErrorCategory::Io,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
