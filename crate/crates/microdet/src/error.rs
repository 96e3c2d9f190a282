//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("{op}: axis {axis} out of range for rank {rank}")]
    Axis {
        op: &'static str,
        axis: usize,
        rank: usize,
    },

    #[error("backward requires a scalar loss, got {numel} elements")]
    NonScalarLoss { numel: usize },

    #[error("loss tensor is not attached to a live tape")]
    DetachedGraph,

    #[error("tape already consumed by a previous backward pass")]
    TapeConsumed,

    #[error("inputs recorded on different tapes")]
    TapeMismatch,

    #[error("rep branch already fused; refusing to fuse again")]
    AlreadyFused,

    #[error("deploy-mode forward requested before fuse()")]
    NotFused,

    #[error("fuse() requires finalized batch-norm statistics (eval mode)")]
    FuseInTrainingMode,

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{file}:{line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },

    #[error("weights file: {0}")]
    WeightsFormat(String),

    #[error("weights file is missing tensor `{0}`")]
    MissingTensor(String),

    #[error("weights file contains unknown tensor `{0}`")]
    UnknownTensor(String),

    #[error("tensor `{name}`: expected shape {expected:?}, file has {got:?}")]
    TensorShape {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("dataset: {0}")]
    Data(String),

    #[error("evaluation split is empty")]
    EmptySplit,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}
