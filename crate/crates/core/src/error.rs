use thiserror::Error;

pub type Result<T> = std::result::Result<T, CoreError>;

/// Error taxonomy shared by all modules.
///
/// `Structural` covers violated operator invariants (non-Hermitian input,
/// dimension mismatches, failed commutator checks); `Numerical` covers
/// integration/quadrature failures with the achieved tolerance attached.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("structural invariant violated: {0}")]
    Structural(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("parameter out of range: {0}")]
    Parameter(String),

    #[error("range error: exponent {exponent:.3e} exceeds safe limit {limit}")]
    Range { exponent: f64, limit: f64 },

    #[error("capacity exceeded: required dimension {required}, cap {allowed}")]
    Capacity { required: usize, allowed: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("consistency check failed: {0}")]
    Consistency(String),

    #[error("operation not supported by this backend: {0}")]
    Capability(String),
}

impl CoreError {
    pub fn structural(msg: impl Into<String>) -> Self {
        CoreError::Structural(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        CoreError::Numerical(msg.into())
    }
}
