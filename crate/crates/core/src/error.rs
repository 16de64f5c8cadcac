use thiserror::Error;

use crate::spectral::SpectralResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sector with {sites} sites exceeds the supported maximum of {max}")]
    Capacity { sites: usize, max: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("convergence failure: {0}")]
    Convergence(String),

    /// Fewer eigenpairs converged than were requested; carries what did converge.
    #[error("only {} of {requested} eigenpairs converged", .converged.eigenvalues.len())]
    PartialResult {
        converged: Box<SpectralResult>,
        requested: usize,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("rank deficient fit: {0}")]
    Rank(String),

    #[error("degenerate spacing between levels {0} and {1}")]
    DegenerateSpacing(usize, usize),

    #[error("conservation violated at t = {time} ns: {quantity} drift {drift:e}")]
    Conservation {
        time: f64,
        quantity: &'static str,
        drift: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
