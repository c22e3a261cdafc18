use thiserror::Error;

/// Errors produced by the regularization toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: expected {expected} entries, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("entry {index} = {value} violates bounds [{lower}, {upper}]")]
    OutOfBounds {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("entry {index} = {value} must be strictly positive")]
    NonPositive { index: usize, value: f64 },

    #[error("level {level} out of range (ladder has {levels} levels)")]
    LevelOutOfRange { level: usize, levels: usize },

    #[error("invalid ladder: {0}")]
    InvalidLadder(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("target grid extends beyond the source grid")]
    ExtentMismatch,

    #[error("not a descent direction: directional derivative {0} >= 0")]
    NotDescent(f64),

    #[error("Crank-Nicolson matrix not diagonally dominant at time row {row}, node {node} (eta = {eta}, dt/dy = {mesh_ratio})")]
    NotDominant {
        row: usize,
        node: usize,
        eta: f64,
        mesh_ratio: f64,
    },

    #[error("singular linear system")]
    Singular,

    #[error("non-finite Tikhonov functional at iteration {iteration}: iterate {iterate:?}")]
    NonFiniteFunctional { iteration: usize, iterate: Vec<f64> },

    #[error("no level satisfies gamma_m <= {bound}; best gamma_m = {best} at level {best_level}")]
    LevelNotFound {
        bound: f64,
        best: f64,
        best_level: usize,
    },

    #[error("sequential discrepancy exhausted after {} steps; residual trace {trace:?}", trace.len())]
    SequentialExhausted { trace: Vec<f64> },

    #[error("rate table needs at least 3 rows, got {0}")]
    TooFewRows(usize),

    #[error("config line {line}: {key}: {message}")]
    Config { line: usize, key: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
