use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument fell outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A distribution could not be constructed or is not admissible.
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    /// The integrand produced a non-finite value.
    #[error("integrand is not finite at x = {abscissa}")]
    NonFiniteIntegrand { abscissa: f64 },

    /// The jamming-probability root could not be bracketed below one.
    #[error("regime boundary: jam marginal is still {marginal:e} at phi = {phi}; no root in [0, 1)")]
    RegimeBoundary { phi: f64, marginal: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
