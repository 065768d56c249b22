use thiserror::Error;

/// Errors produced by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: String,
        got: String,
    },

    #[error("need K >= 1 intervals (at least 2 measurements), got {0} measurement(s)")]
    TooFewMeasurements(usize),

    #[error("measurement times must be strictly increasing (index {index}: {prev} then {next})")]
    NonIncreasingTimes { index: usize, prev: f64, next: f64 },

    #[error("time {t} outside horizon [{t0}, {tk}]")]
    OutsideHorizon { t: f64, t0: f64, tk: f64 },

    #[error("non-finite log-density at t = {t}")]
    NonFiniteDensity { t: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("degenerate junction system (condition estimate {condition:e})")]
    DegenerateJunctionSystem { condition: f64 },

    #[error("Newton iteration did not converge after {iterations} iterations (best residual {best_residual:e})")]
    NewtonDivergence {
        iterations: usize,
        best_residual: f64,
        history: Vec<f64>,
    },

    #[error("collocation mesh refinement changed knot values by {change:e} (limit {limit:e})")]
    MeshNotConverged { change: f64, limit: f64 },

    #[error("wrong system: {0}")]
    WrongSystem(String),

    #[error("simulation: {0}")]
    Simulation(String),

    #[error("csv: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
