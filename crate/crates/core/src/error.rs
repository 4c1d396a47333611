use thiserror::Error;

/// Errors raised anywhere in the simulator.
///
/// `InvalidInput` covers precondition violations (bad grids, negative rates,
/// malformed configuration). Everything else is a numerical failure.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grid too coarse: {0}")]
    Resolution(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("trace truncated: {0}")]
    Truncation(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("target unreachable: {message} (best residual {best_residual:.4})")]
    Unreachable { message: String, best_residual: f64 },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for errors caused by bad inputs rather than numerical trouble.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::InvalidInput(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
