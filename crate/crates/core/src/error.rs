use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("cell index {index} out of range for a grid of {len} cells")]
    CellOutOfRange { index: usize, len: usize },
    #[error("empty point set")]
    EmptyPointSet,
    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(&'static str),
    #[error("singular matrix (det = {0:e})")]
    SingularMatrix(f64),
    #[error("origin is not interior to the polygon")]
    OriginNotInterior,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid probability vector: {0}")]
    InvalidProbability(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("zero total likelihood: the emission eliminated every cell in the prior support")]
    ZeroLikelihood,
    #[error("no transitions observed and smoothing is zero")]
    NoTransitions,
    #[error("release context is {found}, expected {expected}")]
    WrongMechanism {
        expected: &'static str,
        found: &'static str,
    },
    #[error("true cell {0} is not in the location set")]
    NotInLocationSet(usize),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("not enough points of interest: need {needed}, have {have}")]
    TooFewPois { needed: usize, have: usize },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("trajectory {trajectory}, step {step}: {source}")]
    AtStep {
        trajectory: usize,
        step: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
