use thiserror::Error;

/// Failure modes of the numerical core.
///
/// The variants map onto distinct process exit codes in the command-line
/// front end, so callers should not collapse them.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("outside physical domain: {0}")]
    Domain(String),
    #[error("numerical non-convergence: {0}")]
    NonConvergence(String),
    #[error("calibration failed: {message}")]
    Calibration {
        message: String,
        trace: Vec<(f64, f64)>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn diverged(msg: impl Into<String>) -> Self {
        Error::NonConvergence(msg.into())
    }
}

pub type Result<T> = core::result::Result<T, Error>;
