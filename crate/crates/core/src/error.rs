use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{0}: empty point set")]
    EmptySet(&'static str),

    #[error("batchnorm needs at least 2 samples per channel in train mode, got {0}")]
    TooFewStatistics(usize),

    #[error("batchnorm `{0}` evaluated before any training step (running statistics uninitialized)")]
    UninitializedStatistics(String),

    #[error("non-finite gradient in parameter `{param}` at step {step}")]
    NonFiniteGradient { param: String, step: u64 },

    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: u64 },

    #[error("mesh topology: {0}")]
    Topology(String),

    #[error("degenerate shape: acceptance rate {rate:.2e} after {proposals} proposals")]
    DegenerateShape { rate: f64, proposals: u64 },

    #[error("field `{0}` is constant over the training split")]
    ConstantField(String),

    #[error("R² undefined: target has zero variance")]
    ZeroVariance,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("unsupported resolution: {0}")]
    UnsupportedResolution(String),

    #[error("input schema: {0}")]
    Schema(String),

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    #[error("OBJ parse error at line {line}: {msg}")]
    Obj { line: usize, msg: String },

    #[error("unknown sample id {0}")]
    UnknownSample(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}
