use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum NtkError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("covariance is not positive semi-definite: q_aa={q_aa}, q_ab={q_ab}, q_bb={q_bb}")]
    NotPsd { q_aa: f64, q_ab: f64, q_bb: f64 },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("kernel matrix is ill-conditioned (condition estimate {condition:e}, jitter up to {max_jitter:e})")]
    IllConditioned { condition: f64, max_jitter: f64 },

    #[error("eigensolver did not converge on a {dim}x{dim} matrix")]
    EigenFailure { dim: usize },

    #[error("singular value decomposition did not converge on a {rows}x{cols} matrix")]
    SvdFailure { rows: usize, cols: usize },

    #[error("training diverged at iteration {iteration} (loss {loss})")]
    Diverged { iteration: usize, loss: f64 },

    #[error("iteration produced a non-finite state at step {iteration}")]
    NonFiniteState { iteration: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("failed to converge: {0}")]
    NoConvergence(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Idx(#[from] crate::idx::IdxError),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NtkError>;
