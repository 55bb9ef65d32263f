use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("not a physical covariance matrix: {0}")]
    NotPhysical(String),

    #[error("photon subtraction undefined: trace denominator {denominator:e} is below {floor:e}")]
    DegenerateSubtraction { denominator: f64, floor: f64 },

    #[error("rejection sampling envelope failure: acceptance rate {rate:e}")]
    EnvelopeFailure { rate: f64 },

    #[error("measurement {index} has probability {value:e} under the current estimate")]
    ZeroProbability { index: usize, value: f64 },

    #[error("Fock space dimension {dimension} exceeds the configured limit {limit}")]
    DimensionOverflow { dimension: usize, limit: usize },

    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },

    #[error("unknown {kind} '{name}' (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad user input or configuration, as opposed to
    /// failures that happen while an otherwise valid experiment runs.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_)
                | Error::InvalidInput(_)
                | Error::DimensionMismatch { .. }
                | Error::NotPhysical(_)
                | Error::MalformedRow { .. }
                | Error::UnknownStrategy { .. }
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
