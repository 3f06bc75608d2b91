use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("gset parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("brute-force enumeration refused for n = {n} (limit {limit})")]
    TooLarge { n: usize, limit: usize },

    #[error("eigendecomposition did not converge: off-diagonal norm {off_diagonal_norm:e} after {iterations} iterations")]
    NoConvergence {
        off_diagonal_norm: f64,
        iterations: usize,
    },

    #[error("non-finite amplitude at iteration {iteration}, column {column}")]
    NonFiniteAmplitude { iteration: usize, column: usize },

    #[error("non-finite loss in PPO update: {0}")]
    NonFiniteLoss(String),

    #[error("episode already finished")]
    EpisodeFinished,

    #[error("episode not finished: {steps_taken} of {steps_total} agent steps taken")]
    EpisodeNotFinished { steps_taken: usize, steps_total: usize },

    #[error("empty leaderboard")]
    EmptyLeaderboard,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
