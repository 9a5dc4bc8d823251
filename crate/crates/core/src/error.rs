use alloc::string::String;

/// A configuration value that violates its constraint.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{key} {constraint}")]
pub struct ConfigError {
    pub key: &'static str,
    pub constraint: String,
}

impl ConfigError {
    pub fn new(key: &'static str, constraint: impl Into<String>) -> Self {
        ConfigError {
            key,
            constraint: constraint.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("event queue went back in time: popped {popped} after {now}")]
    NonMonotoneTime { now: f64, popped: f64 },

    #[error("invariant violated at t={time}: {what}")]
    InvariantViolated { time: f64, what: String },
}

pub type Result<T> = core::result::Result<T, Error>;
