use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An operation that needs a direction was handed a zero-length vector.
    #[error("zero-norm vector: {0}")]
    ZeroNorm(&'static str),

    /// Vector/table sizes disagree with what the operation requires.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A scalar parameter is outside its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Text input (maze layout, model file, config) failed to parse.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Model data is internally inconsistent (e.g. a non-stochastic
    /// transition row).
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// The requested combination of options is not supported.
    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    /// A numeric quantity became NaN or infinite mid-run.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// An iterative solver failed to converge within its sweep budget.
    #[error("solver did not converge: {0}")]
    NoConvergence(String),
}
