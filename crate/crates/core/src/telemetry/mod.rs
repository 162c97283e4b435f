//! Append-only interaction log and the analyses built on it.
//!
//! A log file is JSON lines: a header `{"schema_version": N}` followed by one
//! [`TelemetryEvent`] per line. Payloads are JSON objects with sorted keys,
//! so the same session always serializes to the same bytes.

pub mod audit;
pub mod metrics;
pub mod replay;
pub mod schedule;
mod sink;

pub use sink::{read_log, parse_log, EventSink, JsonlFileSink, LogContents, MemorySink, SinkError};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::clock::Millis;
use crate::error::SessionError;
use crate::ids::SessionId;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    SessionCreated,
    CodeUpdate,
    ChatSend,
    ChatResponse,
    ChatClear,
    ChatTyping,
    SuggestionsGenerated,
    SuggestionShown,
    SuggestionExpand,
    SuggestionCollapse,
    SuggestionAccept,
    SuggestionDelete,
    SuggestionsClear,
    SuggestionCopy,
    SuggestionRequest,
    SuggestionPreview,
    PreviewReady,
    PreviewAccept,
    PreviewHide,
    GenerationDiscarded,
    ParseFailure,
    ProviderError,
    Run,
    TaskStart,
    TaskSubmit,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::SessionCreated => "session_created",
            EventKind::CodeUpdate => "code_update",
            EventKind::ChatSend => "chat_send",
            EventKind::ChatResponse => "chat_response",
            EventKind::ChatClear => "chat_clear",
            EventKind::ChatTyping => "chat_typing",
            EventKind::SuggestionsGenerated => "suggestions_generated",
            EventKind::SuggestionShown => "suggestion_shown",
            EventKind::SuggestionExpand => "suggestion_expand",
            EventKind::SuggestionCollapse => "suggestion_collapse",
            EventKind::SuggestionAccept => "suggestion_accept",
            EventKind::SuggestionDelete => "suggestion_delete",
            EventKind::SuggestionsClear => "suggestions_clear",
            EventKind::SuggestionCopy => "suggestion_copy",
            EventKind::SuggestionRequest => "suggestion_request",
            EventKind::SuggestionPreview => "suggestion_preview",
            EventKind::PreviewReady => "preview_ready",
            EventKind::PreviewAccept => "preview_accept",
            EventKind::PreviewHide => "preview_hide",
            EventKind::GenerationDiscarded => "generation_discarded",
            EventKind::ParseFailure => "parse_failure",
            EventKind::ProviderError => "provider_error",
            EventKind::Run => "run",
            EventKind::TaskStart => "task_start",
            EventKind::TaskSubmit => "task_submit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TelemetryEvent {
    pub session_id: SessionId,
    pub condition_name: String,
    #[serde(default)]
    pub task_id: Option<String>,
    pub seq: u64,
    pub ts_ms: Millis,
    pub kind: EventKind,
    pub payload: Value,
}

impl TelemetryEvent {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("telemetry events serialize")
    }
}

pub fn header_line() -> String {
    serde_json::json!({ "schema_version": SCHEMA_VERSION }).to_string()
}

/// The per-session writer: stamps session fields and sequence numbers and
/// goes read-only after the first failed append.
pub struct SessionLog {
    session_id: SessionId,
    condition_name: String,
    task_id: Option<String>,
    next_seq: u64,
    last_ts: Millis,
    sink: std::sync::Arc<dyn EventSink>,
    failure: Option<String>,
}

impl std::fmt::Debug for SessionLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionLog")
            .field("session_id", &self.session_id)
            .field("next_seq", &self.next_seq)
            .field("failure", &self.failure)
            .finish()
    }
}

impl SessionLog {
    pub fn new(
        session_id: SessionId,
        condition_name: impl Into<String>,
        sink: std::sync::Arc<dyn EventSink>,
    ) -> Self {
        Self {
            session_id,
            condition_name: condition_name.into(),
            task_id: None,
            next_seq: 1,
            last_ts: Millis::MIN,
            sink,
            failure: None,
        }
    }

    pub fn set_task(&mut self, task_id: Option<String>) {
        self.task_id = task_id;
    }

    pub fn task_id(&self) -> Option<&str> {
        self.task_id.as_deref()
    }

    pub fn failure(&self) -> Option<&str> {
        self.failure.as_deref()
    }

    /// Fails fast once the log has become unwritable.
    pub fn check_writable(&self) -> Result<(), SessionError> {
        match &self.failure {
            Some(msg) => Err(SessionError::TelemetryUnavailable(msg.clone())),
            None => Ok(()),
        }
    }

    pub fn emit(&mut self, ts: Millis, kind: EventKind, payload: Value) -> Result<u64, SessionError> {
        self.check_writable()?;
        let ts = ts.max(self.last_ts);
        let event = TelemetryEvent {
            session_id: self.session_id.clone(),
            condition_name: self.condition_name.clone(),
            task_id: self.task_id.clone(),
            seq: self.next_seq,
            ts_ms: ts,
            kind,
            payload,
        };
        if let Err(e) = self.sink.append(&event) {
            tracing::error!(session = %self.session_id, error = %e, "telemetry append failed");
            self.failure = Some(e.to_string());
            return Err(SessionError::TelemetryUnavailable(e.to_string()));
        }
        self.next_seq += 1;
        self.last_ts = ts;
        Ok(event.seq)
    }
}
