use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("contradictory constraints: {0}")]
    ContradictoryConstraints(String),

    #[error("infeasible design: {reason}")]
    InfeasibleDesign {
        reason: String,
        /// Structural conditions that rule the constraint set out, if any were found.
        violated: Vec<String>,
    },

    #[error("W is not a Stieltjes matrix: entry ({row}, {col}) = {value:e} is positive")]
    NotStieltjes { row: usize, col: usize, value: f64 },

    #[error("rank deficient: {0}")]
    RankDeficient(String),

    #[error("incompatible factors: {0}")]
    IncompatibleFactor(String),

    #[error("conic solver failed with status {status}: {message}")]
    SolverFailure { status: String, message: String },

    #[error("iteration diverged at iteration {iteration} (residual {residual:e})")]
    Diverged { iteration: usize, residual: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
