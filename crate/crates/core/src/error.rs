use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("transition row not stochastic at (s={s}, a={a}): sum = {sum}")]
    TransitionNotStochastic { s: usize, a: usize, sum: f64 },

    #[error("negative transition probability P[{s}][{a}][{next}] = {value}")]
    NegativeTransition {
        s: usize,
        a: usize,
        next: usize,
        value: f64,
    },

    #[error("initial distribution not a probability vector: {0}")]
    InitialDistribution(String),

    #[error("discount out of range: gamma = {0} (must lie in (0, 1))")]
    DiscountOutOfRange(f64),

    #[error("policy table row {s} not stochastic: sum = {sum}")]
    PolicyNotStochastic { s: usize, sum: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("linear solve failed: {0}")]
    SingularSystem(String),

    #[error("importance weight undefined: behavior probability is zero at (s={s}, a={a})")]
    ImportanceWeightUndefined { s: usize, a: usize },

    #[error("degenerate fit: rank {rank} < {dim} (condition number {condition_number:e})")]
    DegenerateFit {
        rank: usize,
        dim: usize,
        condition_number: f64,
    },

    #[error("all {n_trials} trials failed for estimator {estimator} at {n_rollouts} rollouts")]
    AllTrialsFailed {
        estimator: String,
        n_rollouts: usize,
        n_trials: usize,
    },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
