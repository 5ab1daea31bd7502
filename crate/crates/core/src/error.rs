use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("symmetric eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {residual:.3e})")]
    EigenNoConvergence { sweeps: usize, residual: f64 },

    #[error("alignment unavailable: {0}")]
    AlignmentUnavailable(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("problem has {dof} scalar degrees of freedom, oracle supports at most 3")]
    OracleTooLarge { dof: usize },

    #[error("solution carries no dual multipliers")]
    MissingDuals,

    #[error("Charnes-Cooper scaling degenerated (t = {0:.3e})")]
    DegenerateTransform(f64),
}
