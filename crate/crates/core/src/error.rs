use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("not enough points for a {components}-component fit: have {have}, need {need}")]
    TooFewPoints { components: usize, have: usize, need: usize },

    #[error("matrix not positive definite ({0}); increase the noise floor")]
    NotPositiveDefinite(String),

    #[error("non-finite density value for query state {state} and action {action:?}")]
    NonFiniteDensity { state: usize, action: Vec<f64> },

    #[error("objective returned non-finite value {value} for action {action:?}")]
    NonFiniteObjective { action: Vec<f64>, value: f64 },

    #[error("goal unreachable under sampling budget ({attempts} extension attempts)")]
    SamplingBudget { attempts: usize },

    #[error("no goal state in the sampled set")]
    NoGoalState,

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
