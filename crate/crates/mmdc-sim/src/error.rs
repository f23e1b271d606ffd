//! Error types shared across the crate.

use thiserror::Error;

/// Configuration loading/validation failures.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: &'static str },
}

/// Event-queue contract violations.
#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("cannot schedule event at t={fire_time} before current clock t={clock}")]
    ScheduleInPast { fire_time: f64, clock: f64 },
}

/// Run-level failures.
#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error("output I/O error: {0}")]
    Io(#[from] std::io::Error),
}
