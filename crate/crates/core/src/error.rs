use thiserror::Error;

/// Errors raised by the model, kernel and sampler code.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A Cholesky factorization failed; `block` names the quantity being factored.
    #[error("factorization failed for {block}")]
    Factorization { block: String },
    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn factorization(block: impl Into<String>) -> Self {
        Error::Factorization { block: block.into() }
    }
}
