use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("unknown stage template {0}")]
    UnknownStage(usize),

    #[error("quadratic program did not converge after {iterations} iterations (best KKT residual {residual:e})")]
    QpMaxIterations { iterations: usize, residual: f64 },

    #[error("quadratic program is infeasible")]
    QpInfeasible,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("exact dispatch is limited to J <= {max_jobs}, K <= {max_robots} (got J={jobs}, K={robots})")]
    ExactTooLarge {
        jobs: usize,
        robots: usize,
        max_jobs: usize,
        max_robots: usize,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors that stem from numerical breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::QpMaxIterations { .. } | Error::QpInfeasible | Error::NonFinite(_)
        )
    }

    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Json(_) | Error::UnknownStage(_))
    }
}
