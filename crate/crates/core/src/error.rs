use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// State of an adaptive integration when it gave up.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureDiagnostics {
    pub lower: f64,
    pub upper: f64,
    pub estimate: f64,
    pub abs_error: f64,
    pub subintervals: usize,
    pub evaluations: usize,
}

impl fmt::Display for QuadratureDiagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}, {}]: estimate {:e} with error {:e} after {} subintervals ({} evaluations)",
            self.lower, self.upper, self.estimate, self.abs_error, self.subintervals, self.evaluations
        )
    }
}

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed or inconsistent data (series layout, files, config).
    #[error("structural error: {0}")]
    Structure(String),

    /// A documented precondition of the operation does not hold.
    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("quadrature did not converge on {0}")]
    Quadrature(QuadratureDiagnostics),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn structure(msg: impl Into<String>) -> Self {
        Error::Structure(msg.into())
    }
}

/// Fails with a domain error unless `value` is finite and strictly positive.
pub(crate) fn require_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be finite and > 0, got {value}")))
    }
}

pub(crate) fn require_non_negative(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be finite and >= 0, got {value}")))
    }
}
