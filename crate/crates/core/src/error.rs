use thiserror::Error;

/// Errors surfaced by the tensor algebra, model evaluation, and fitting
/// layers.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are inconsistent with each other or with the operation.
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    /// A scalar argument is outside its valid range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A matrix that must be invertible (after regularization) is not.
    #[error("singular matrix: {0}")]
    Singular(String),

    /// A non-finite value appeared where finite arithmetic is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// The iterate produced a non-finite loss.
    #[error("divergence at iteration {iter}: loss is non-finite; try a step size smaller than eta = {eta}")]
    Divergence { iter: usize, eta: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
