//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by this crate.
///
/// Variants are grouped by origin: data ingestion (`Io`, `Parse`,
/// `IdxFormat`), caller mistakes (`InvalidArgument`, `DimensionMismatch`,
/// `Domain`, `Unsupported`), and numerical breakdowns (`Rank`, `Graph`,
/// `Numerical`, `Divergence`).
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed CSV input; `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Malformed IDX payload (bad magic, count mismatch, truncation).
    #[error("invalid idx data: {0}")]
    IdxFormat(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Input outside a metric's domain (e.g. negative chi-square entries).
    #[error("domain error: {0}")]
    Domain(String),

    /// Too many components requested from a rank-deficient operator.
    #[error("rank error: requested {requested} components, usable maximum is {max}")]
    Rank { requested: usize, max: usize },

    #[error("graph error: {0}")]
    Graph(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Iterative solver produced a non-finite iterate.
    #[error("divergence at iteration {iteration}: {message}")]
    Divergence { iteration: usize, message: String },

    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    /// True for failures of the numerics rather than of the input data.
    /// The CLI maps these to a distinct exit code.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerical(_) | Error::Divergence { .. } | Error::Rank { .. }
        )
    }
}
