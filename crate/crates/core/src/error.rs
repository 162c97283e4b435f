use thiserror::Error;

use crate::clock::Millis;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("unknown condition `{0}`")]
    UnknownCondition(String),
    #[error("invalid condition `{name}`: {reason}")]
    InvalidCondition { name: String, reason: String },
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("task registry needs two tasks of each type: {0}")]
    TaskRegistry(String),
    #[error("cannot parse configuration: {0}")]
    Parse(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("event at {event_ts} ms precedes state time {state_ts} ms")]
pub struct OutOfOrder {
    pub event_ts: Millis,
    pub state_ts: Millis,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("{what} `{id}` not found")]
    NotFound { what: &'static str, id: String },
    #[error("{0}")]
    BadState(String),
    #[error("preview `{0}` is stale: the document changed since it was computed")]
    StalePreview(String),
    #[error("`{operation}` is not available in condition `{condition}`")]
    Unsupported {
        operation: &'static str,
        condition: String,
    },
    #[error("invalid request: {0}")]
    Validation(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    OutOfOrder(#[from] OutOfOrder),
    #[error("runner not configured")]
    RunnerUnavailable,
    #[error("model provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("telemetry log unavailable, session is read-only: {0}")]
    TelemetryUnavailable(String),
}

impl SessionError {
    pub(crate) fn not_found(what: &'static str, id: impl Into<String>) -> Self {
        SessionError::NotFound {
            what,
            id: id.into(),
        }
    }
}
