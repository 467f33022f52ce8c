//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("time grid must start at 0 and be strictly increasing")]
    BadTimeGrid,

    #[error("time {t} lies outside [0, {maturity}]")]
    TimeOutOfRange { t: f64, maturity: f64 },

    #[error("time {0} is not a column of the path matrix")]
    TimeNotOnGrid(f64),

    #[error("degenerate price grid: sample standard deviation is zero")]
    DegenerateGrid,

    #[error("no hazard root in [0, 10] for the segment ending at tenor {tenor}y")]
    NoHazardRoot { tenor: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("matrix is not unitary (deviation {0:.3e})")]
    NotUnitary(f64),

    #[error("gate targets qubit {qubit} but circuit has {n_qubits} qubits")]
    QubitOutOfRange { qubit: usize, n_qubits: usize },

    #[error("gate acts twice on qubit {0}")]
    RepeatedQubit(usize),

    #[error("input is not a permutation")]
    NotBijective,

    #[error("bond dimension {d} exceeds 2^floor(n/2) = {max}")]
    BondTooLarge { d: usize, max: usize },

    #[error("value {0} outside [0, 1]")]
    OutOfUnitInterval(f64),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("fit needs at least {needed} points, got {got}")]
    DegenerateFit { needed: usize, got: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
