use thiserror::Error;

/// Failures surfaced by the library.
///
/// The variants fall into three families that the CLI maps onto exit codes:
/// invalid input, numerical non-convergence and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("integration failed at r = {r:.6e}: {reason}")]
    Integration { r: f64, reason: String },

    #[error("bracket is inconsistent: {0}")]
    Bracket(String),

    #[error("seam mismatch {mismatch:.3e} exceeds tolerance {tol:.1e} at r = {r}")]
    Seam { r: f64, mismatch: f64, tol: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        what: String,
        iterations: usize,
        residual: f64,
    },

    #[error("modulation refused: {0}")]
    Modulation(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("format: {0}")]
    Format(String),
}

impl Error {
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParams(_) | Error::InvalidArgument(_) | Error::Bracket(_)
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Format(_))
    }

    pub(crate) fn no_conv(what: &str, iterations: usize, residual: f64) -> Self {
        Error::NoConvergence {
            what: what.to_string(),
            iterations,
            residual,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
