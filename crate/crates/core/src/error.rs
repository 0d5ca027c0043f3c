use thiserror::Error;

/// Errors raised by the solver, the coordinate transforms and the file formats.
#[derive(Debug, Error)]
pub enum ChError {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("tails not settled: variation {variation:.3e} exceeds tolerance {tol:.3e} on the {side} window")]
    UnsettledTails {
        side: &'static str,
        variation: f64,
        tol: f64,
    },

    #[error("g construction failed: residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    QuadratureFailure { residual: f64, tol: f64 },

    #[error("invalid partition function: {0}")]
    InvalidPartition(String),

    #[error("negative energy density {value:.3e} at node {index}")]
    NegativeDensity { index: usize, value: f64 },

    #[error("invalid relabeling: {0}")]
    InvalidRelabeling(String),

    #[error("relabeling is not strictly increasing (min slope {min_slope:.3e})")]
    NotMonotone { min_slope: f64 },

    #[error("degenerate labeling: y + H is flat over {cells} cells")]
    DegenerateLabeling { cells: usize },

    #[error("characteristics are not monotone: y drops by {drop:.3e} at node {index}")]
    NonMonotoneY { index: usize, drop: f64 },

    #[error("solution blew up; last good time {last_good_time}")]
    Blowup { last_good_time: f64 },

    #[error("state is not in D: {0}")]
    NotInD(String),

    #[error("atom mass must be positive, got {0}")]
    NonpositiveMass(f64),

    #[error("peakon positions coincide at {0}")]
    CoincidentPositions(f64),

    #[error("peakons approach collision: separation {separation:.3e} at t = {time}")]
    CollisionApproach { time: f64, separation: f64 },

    #[error("at least {needed} snapshots required, got {got}")]
    InsufficientSnapshots { needed: usize, got: usize },

    #[error("test function support touches the domain boundary: {0}")]
    SupportEscape(String),

    #[error("singular tridiagonal system at row {0}")]
    SingularSystem(usize),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ChError>;
