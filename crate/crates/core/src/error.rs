use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A value fell outside the domain of the requested operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Malformed input data (CSV rows, dimension mismatches, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A prediction or fitted value became non-finite; the run is aborted.
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    /// The exact computation is not available for these parameters.
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
