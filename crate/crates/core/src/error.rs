use std::path::PathBuf;

use amn_tensor::TensorError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported wav encoding: {0}")]
    UnsupportedEncoding(String),

    #[error("truncated {what}: {detail}")]
    Truncated { what: &'static str, detail: String },

    #[error("malformed {what}: {msg}")]
    Malformed { what: &'static str, msg: String },

    #[error("sample rate {got} Hz is not supported (expected {expected} Hz)")]
    SampleRate { got: u32, expected: u32 },

    #[error("clip of {samples} samples is shorter than one hop ({hop} samples)")]
    ClipTooShort { samples: usize, hop: usize },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("unknown label {label:?}")]
    UnknownLabel { label: String },

    #[error("invalid event: {0}")]
    InvalidEvent(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("clip ids differ between predictions and reference: {0}")]
    IdMismatch(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("empty batch")]
    EmptyBatch,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
