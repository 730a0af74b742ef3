use thiserror::Error;

/// Failures raised by the numerical and analytic operations of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Adaptive quadrature could not reach the requested tolerance.
    #[error("quadrature did not converge: estimated error {error:e} above tolerance {tolerance:e} ({context})")]
    QuadratureNonConvergence { error: f64, tolerance: f64, context: String },

    /// A dyadic limit schedule failed the Cauchy acceptance test.
    #[error("limit did not converge within {steps} doublings: {context}")]
    LimitNonConvergence { steps: usize, context: String },

    /// The input lies outside the domain of the requested mapping.
    #[error("domain violation: {0}")]
    DomainViolation(String),

    /// The input does not belong to the class required by the operation.
    #[error("not in class: {0}")]
    NotInClass(String),

    /// Jump-size tables could not be built for the requested cutoff.
    #[error("invalid jump cutoff: {0}")]
    InvalidCutoff(String),

    /// Malformed input: shape mismatches, out-of-range parameters and similar.
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// True for failures caused by numerics rather than by the input itself.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::QuadratureNonConvergence { .. } | Error::LimitNonConvergence { .. })
    }

    /// True for analytic rejections (class or domain membership).
    pub fn is_analytic(&self) -> bool {
        matches!(self, Error::DomainViolation(_) | Error::NotInClass(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
