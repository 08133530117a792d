//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("manifest field `{0}` is missing")]
    MissingField(&'static str),

    #[error("manifest field `{field}` is invalid: {reason}")]
    InvalidField { field: &'static str, reason: String },

    #[error("unsupported dtype `{0}`, expected \"float32\"")]
    UnsupportedDtype(String),

    #[error("layer file `{file}` is {actual} bytes, expected {expected}")]
    FileSizeMismatch {
        file: String,
        expected: u64,
        actual: u64,
    },

    #[error("layer index {layer} out of range for {n_layers} layers")]
    LayerOutOfRange { layer: usize, n_layers: usize },

    #[error("non-finite key value at head {head}, token {token}, dim {dim}")]
    NonFinite {
        head: usize,
        token: usize,
        dim: usize,
    },

    #[error("key row {0} has zero norm")]
    ZeroNorm(usize),

    #[error("reliability gap undefined: every position is a sink")]
    AllSinks,

    #[error("planted needle set is empty")]
    EmptyPlanted,

    #[error("head dim {head_dim} cannot host {needles} needles (need head_dim >= needles + 1)")]
    InfeasibleDimension { head_dim: usize, needles: usize },

    #[error("stream too short: {0}")]
    StreamTooShort(String),

    #[error("invalid needle position {pos}: {reason}")]
    InvalidNeedle { pos: usize, reason: String },

    #[error("stream generation failed its verification predicate after {0} attempts")]
    GenerationFailed(usize),

    #[error("eviction ratio {0} outside [0, 1)")]
    InvalidRatio(f64),

    #[error("invalid prior {0:?}: entries must be positive and sum to 1")]
    InvalidPrior([f64; 3]),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("unknown generator `{0}`")]
    UnknownGenerator(String),

    #[error("unknown sweep knob `{0}`")]
    UnknownKnob(String),

    #[error("io error on `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error on `{path}`: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>) -> impl FnOnce(serde_json::Error) -> Error {
        let path = path.into();
        move |source| Error::Json { path, source }
    }
}
