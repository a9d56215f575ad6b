//! Crate-wide error type.

use std::path::PathBuf;

/// Errors surfaced by tensor kernels, network builders, the data pipeline
/// and the training/evaluation harnesses.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor or parameter shapes do not line up. Both sides are named so the
    /// diagnostic can be acted on without a debugger.
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    /// An argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A network description cannot be realized (bad channel plan, lane
    /// mismatch, shortcut over a channel-changing layer, ...).
    #[error("network build error: {0}")]
    Build(String),

    /// A gradient buffer was required but not present.
    #[error("missing gradient buffer for parameter `{0}`")]
    MissingGrad(String),

    /// A gradient became NaN/Inf; the optimizer refuses to apply it.
    #[error("non-finite gradient in parameter `{0}`; step aborted")]
    NonFiniteGradient(String),

    /// Checkpoint fingerprint does not match the target network spec.
    #[error("checkpoint fingerprint {found:#018x} does not match spec fingerprint {expected:#018x}")]
    FingerprintMismatch { expected: u64, found: u64 },

    /// A manifest, config, checkpoint or image file failed to parse.
    #[error("format error in {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    /// I/O failure with the offending path attached.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(detail: impl Into<String>) -> Self {
        Error::InvalidArgument(detail.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
