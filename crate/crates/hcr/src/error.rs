use thiserror::Error;

/// Errors produced by the estimation pipeline.
#[derive(Debug, Error)]
pub enum HcrError {
    /// Malformed or inconsistent input: arity mismatches, empty samples,
    /// out-of-range values, unknown variable names.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A fitted scale collapsed to zero (all samples identical).
    #[error("degenerate scale: {0}")]
    DegenerateScale(String),

    /// Argument outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Requested basis (or grid) would exceed the configured size cap.
    #[error("resource limit: {0}")]
    ResourceLimit(String),

    /// Conditioning was asked to renormalize by a non-positive context
    /// marginal density. Callers may fall back to the unnormalized slice.
    #[error("non-positive context density: marginal density at context is {0}")]
    NonPositiveContextDensity(f64),
}

pub type Result<T> = std::result::Result<T, HcrError>;
