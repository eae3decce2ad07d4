use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown model family `{0}`")]
    UnknownFamily(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("state {state} lies beyond the rate table (length {len}) and the tail rule forbids extrapolation")]
    BeyondTable { state: u64, len: usize },

    #[error("numeric overflow in {0}")]
    Overflow(String),

    #[error("no sign change of Q_n found for x up to {ceiling} with n <= {n_trunc}")]
    NoSignChange { ceiling: f64, n_trunc: usize },

    #[error("iteration did not converge within {iterations} steps")]
    NonConvergence { iterations: usize },

    #[error("negative weight {value} at j = {index}: x exceeds the decay parameter or precision was lost")]
    NegativeWeight { index: usize, value: f64 },

    #[error("truncation mass {mass:e} exceeds threshold {threshold:e}; increase the truncation level")]
    TruncationMass { mass: f64, threshold: f64 },

    #[error("mass leaked through the truncation boundary {leaked:e} exceeds threshold {threshold:e}")]
    LeakedMass { leaked: f64, threshold: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// True for failures of the numerics rather than of the input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Overflow(_)
                | Error::NoSignChange { .. }
                | Error::NonConvergence { .. }
                | Error::NegativeWeight { .. }
                | Error::TruncationMass { .. }
                | Error::LeakedMass { .. }
        )
    }

    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
