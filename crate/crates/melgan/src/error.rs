use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A tensor dimension disagrees with what an operation expects.
    /// `axis` names the offending axis ("batch", "channels", "time", ...).
    #[error("{op}: {axis} mismatch (expected {expected}, got {actual})")]
    DimMismatch {
        op: &'static str,
        axis: &'static str,
        expected: usize,
        actual: usize,
    },

    /// An operation was called with arguments outside its contract.
    #[error("{op}: {reason}")]
    InvalidArg { op: &'static str, reason: String },

    #[error("{op}: root tensor must be scalar, has {numel} elements")]
    NotScalar { op: &'static str, numel: usize },

    /// `backward` was invoked on a leaf with no recorded producer.
    #[error("backward: root is a detached leaf; no operations recorded between leaves and root")]
    DetachedGraph,

    #[error("parameter {0} has no gradient")]
    MissingGrad(String),

    /// A loss or activation became NaN/Inf. Names the first offending tensor.
    #[error("non-finite value, first occurring in tensor `{0}`")]
    NonFinite(String),

    #[error("weight norm: zero-norm slice {index} (cannot normalize)")]
    ZeroNorm { index: usize },

    #[error("wav {path}: chunk `{chunk}`: {reason}")]
    Wav {
        path: String,
        chunk: String,
        reason: String,
    },

    #[error("checkpoint: bad magic bytes (expected MGK1)")]
    CkptMagic,

    #[error("checkpoint: unsupported format version {0}")]
    CkptVersion(u32),

    #[error("checkpoint: truncated or malformed: {0}")]
    CkptMalformed(String),

    #[error("checkpoint: duplicate tensor name `{0}`")]
    CkptNameCollision(String),

    #[error("checkpoint is missing tensor `{0}`")]
    CkptMissingTensor(String),

    /// Settings embedded in two artifacts disagree (e.g. checkpoint vs mel file).
    #[error("config mismatch on `{key}`: checkpoint has {expected}, input has {actual}")]
    ConfigMismatch {
        key: String,
        expected: String,
        actual: String,
    },

    #[error("config: bad value for `{key}`: {reason}")]
    ConfigParse { key: String, reason: String },

    #[error("no .wav files found in {0}")]
    EmptyDataset(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
