use thiserror::Error;

/// Errors shared by all library modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("work budget exceeded: {what} (estimated cost {estimate:.3e})")]
    Budget { what: String, estimate: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("non-finite value at step {step}, mode {mode}")]
    NonFinite { step: usize, mode: usize },
    #[error("density became nonpositive at node {node} (value {value:.3e}) at kinetic time {time}")]
    NonPositive { node: usize, value: f64, time: f64 },
    #[error("ensemble member {sample} failed: {source}")]
    Member { sample: u64, source: Box<Error> },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn budget(what: impl Into<String>, estimate: f64) -> Self {
        Error::Budget {
            what: what.into(),
            estimate,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
