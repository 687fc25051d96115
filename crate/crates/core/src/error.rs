use thiserror::Error;

/// Errors raised across the simulation, oracle and verification layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension must lie in 1..=63, got {0}")]
    RejectsDimension(usize),
    #[error("stop probability r must lie in (0, 1), got {0}")]
    RejectsStop(f64),
    #[error("parameters violate the probability simplex: {0}")]
    RejectsSimplex(String),
    #[error("quantity requires the {required} regime but parameters are {actual}")]
    WrongRegime { required: String, actual: String },
    #[error("step or matrix built for dimension {expected} used with dimension {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("checkpoint {checkpoint} outside [1, {n_steps}]")]
    CheckpointOutOfRange { checkpoint: u64, n_steps: u64 },
    #[error("log-gamma argument must be positive, got {0}")]
    NonPositiveArgument(f64),
    #[error("series evaluation not certified: {0}")]
    OutOfEvaluationRange(String),
    #[error("conditional covariance trace went negative ({0}); trajectory state is corrupt")]
    NegativeIncrement(f64),
    #[error("enumeration too large: {0}")]
    TooLarge(String),
    #[error("horizon {have} below the required {need}")]
    InsufficientHorizon { have: u64, need: u64 },
    #[error("invalid config field `{field}`: {message}")]
    ConfigInvalid { field: String, message: String },
    #[error("i/o failure: {0}")]
    IoFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::IoFailure(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::IoFailure(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::IoFailure(e.to_string())
    }
}
