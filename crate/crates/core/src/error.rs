use thiserror::Error;

/// Errors produced by the numerical routines and the experiment runner.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter {value} outside admissible range [{lo}, {hi}]")]
    ParameterOutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("point {x} outside the normalized domain [-1, 1]")]
    OutOfDomain { x: f64 },

    #[error("one-sided derivative at the critical point needs a side")]
    SideRequired,

    #[error("power-law residual is undefined at the critical point")]
    AtCriticalPoint,

    #[error("invalid family: {0}")]
    InvalidFamily(String),

    #[error("bit must be 0 or 1, got {0}")]
    InvalidBit(u8),

    #[error("invalid word: {0}")]
    InvalidWord(String),

    #[error("no root in bracket [{lo}, {hi}] (branch is not monotone)")]
    NoRoot { lo: f64, hi: f64 },

    #[error("root finder did not reach tolerance after {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error("depth {depth} exceeds the configured budget {cap}")]
    BudgetExceeded { depth: usize, cap: usize },

    #[error("truncated dual point has only {available} coordinates, {needed} needed")]
    TruncatedExhausted { available: usize, needed: usize },

    #[error("dual point {0} is not eventually zero")]
    NotInA(String),

    #[error("quadrature did not reach tolerance (estimated error {error:e})")]
    Quadrature { error: f64 },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("sequence did not converge: {0}")]
    NonConvergence(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    /// Process exit status for the experiment runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NotConverged { .. }
            | Error::NonConvergence(_)
            | Error::Quadrature { .. }
            | Error::NoRoot { .. } => 2,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
