//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("step index {index} out of range {min}..={max}")]
    StepIndex { index: usize, min: usize, max: usize },

    #[error("missing score cache entry for step {step}")]
    MissingEps { step: usize },

    #[error("invalid model: {0}")]
    Model(String),

    #[error("batch evaluation failed at point {index}: {source}")]
    BatchEval {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("rank-deficient history system at iteration {iteration} (lambda = 0)")]
    RankDeficient { iteration: usize },

    #[error("history buffer error: {0}")]
    History(String),

    #[error("invalid solver configuration: {0}")]
    SolverConfig(String),

    #[error("early-stop predicate failed at iteration {iteration}: {message}")]
    EarlyStop { iteration: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("trajectory file error in field `{field}`: {message}")]
    TrajectoryFile { field: String, message: String },

    #[error("incompatible trajectory: {0}")]
    IncompatibleTrajectory(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
