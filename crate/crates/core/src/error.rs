use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the vocoder pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch in {dim}: {detail}")]
    Shape {
        op: &'static str,
        dim: &'static str,
        detail: String,
    },
    #[error("{op}: invalid hyperparameter {name} = {value}")]
    Hyperparameter {
        op: &'static str,
        name: &'static str,
        value: String,
    },
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
    #[error("objective is not a scalar (shape {0:?})")]
    NonScalar(Vec<usize>),
    #[error("empty audio")]
    EmptyAudio,
    #[error("unsupported codec: {0}")]
    UnsupportedCodec(String),
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("sample out of range: {0}")]
    SampleRange(f64),
    #[error("unsupported sample rate {0} Hz")]
    UnsupportedRate(u32),
    #[error("frame count mismatch: {0} vs {1}")]
    FrameMismatch(usize, usize),
    #[error("length {len} not divisible by {factor}")]
    NotDivisible { len: usize, factor: usize },
    #[error("input shorter than one frame ({len} < {frame_len})")]
    TooShort { len: usize, frame_len: usize },
    #[error("invalid f0 {0} Hz")]
    InvalidF0(f64),
    #[error("bad file format: {0}")]
    Format(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("missing file {0}")]
    Missing(PathBuf),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(op: &'static str, dim: &'static str, detail: impl Into<String>) -> Error {
    Error::Shape {
        op,
        dim,
        detail: detail.into(),
    }
}

pub(crate) fn hyper_err(op: &'static str, name: &'static str, value: impl ToString) -> Error {
    Error::Hyperparameter {
        op,
        name,
        value: value.to_string(),
    }
}
