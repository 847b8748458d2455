use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates a documented precondition. `field` names the offending input.
    #[error("invalid {field}: {reason}")]
    InvalidInput { field: String, reason: String },

    #[error("quadrature did not converge: estimated error {error:e} exceeds tolerance {tolerance:e} after {intervals} subintervals")]
    QuadratureNotConverged {
        error: f64,
        tolerance: f64,
        intervals: usize,
    },

    #[error("evaluation point lies on the wire axis")]
    OnWireAxis,

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("process has an asymmetric spectrum; classical trajectories cannot realise S(w) != S(-w)")]
    AsymmetricSpectrum,

    #[error("solver did not converge after {iterations} iterations (relative change {change:e})")]
    SolverNotConverged { iterations: usize, change: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for failures caused by bad user input rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput { .. }
                | Error::Parse(_)
                | Error::GridMismatch(_)
                | Error::AsymmetricSpectrum
                | Error::OnWireAxis
        )
    }
}
