use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported oracle mode: {0}")]
    UnsupportedMode(String),

    /// A precondition of an algorithm was violated by its caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Tolerance outside the range in which the query bounds are stated.
    #[error("epsilon {eps} outside admissible range: requires eps <= {bound_name} = {bound}")]
    Range { eps: f64, bound_name: &'static str, bound: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    NoConvergence { sweeps: usize, off_norm: f64 },
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension { expected, got });
    }
    Ok(())
}
