//! Crate-wide error type and result alias.

use thiserror::Error;

/// Errors surfaced by the library. CLI exit codes map `Config` to 2 and
/// `Diverged` to 3; everything else is an ordinary failure.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad configuration: unknown key, invalid value, inconsistent settings.
    #[error("config error: {0}")]
    Config(String),

    /// Dimension disagreement between operands.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A NaN or infinity appeared where a finite value is required.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// An argument outside the operation's domain (empty window, bad label, ...).
    #[error("invalid argument: {0}")]
    Invalid(String),

    /// Training loss left the finite range; the run is unusable past `iter`.
    #[error("training diverged at iteration {iter} ({what})")]
    Diverged { iter: usize, what: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
