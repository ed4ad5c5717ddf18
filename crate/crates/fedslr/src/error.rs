//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violates a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Two parameter containers (or a matrix and a layer) disagree on shape.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Cross-client state is inconsistent (e.g. empty selection).
    #[error("protocol error: {0}")]
    Protocol(String),

    /// An iterate became non-finite during optimization.
    #[error("divergence at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    /// A dataset file could not be parsed.
    #[error("parse error in {path} at byte {offset}: {detail}")]
    Parse {
        path: String,
        offset: u64,
        detail: String,
    },

    /// Dataset contents cannot satisfy the request.
    #[error("data error: {0}")]
    Data(String),

    /// Configuration failed validation.
    #[error("config error in {path}: {detail}")]
    Config { path: String, detail: String },

    /// A checkpoint payload does not match its manifest.
    #[error("checkpoint corrupt: {0}")]
    Corrupt(String),

    /// A checkpoint was written by an unsupported format version.
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    UnsupportedVersion { found: String, expected: String },

    /// An iterative kernel failed to converge within its budget.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
