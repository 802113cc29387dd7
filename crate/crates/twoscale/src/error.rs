//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument was outside its documented range.
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    /// A documented precondition of an operation was violated.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The truncated chain is reducible, so πQ = 0 has no unique
    /// probability solution.
    #[error("no unique invariant measure: {0}")]
    NoUniqueInvariantMeasure(String),

    /// An iterative solver stopped above its residual target.
    #[error("solver did not converge: residual {residual:e} > tol {tol:e}")]
    ConvergenceFailure { residual: f64, tol: f64 },

    /// A fit was requested on fewer usable points than the method needs.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// The Euler-Maruyama step does not resolve the fast chain (dt > α/10).
    #[error("step size rejected: dt {dt} > alpha/10 = {limit} (pass allow_coarse_dt to override)")]
    StepSizeRejected { dt: f64, limit: f64 },

    /// A simulation or solve produced non-finite values.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// CLI configuration error; the message names the offending key.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }

    /// Process exit code for the CLI: config errors are 1, numerical
    /// failures 2, i/o failures 3.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 3,
            Error::Config(_) | Error::InvalidArgument { .. } => 1,
            _ => 2,
        }
    }
}
