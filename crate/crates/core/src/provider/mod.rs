//! Model providers: a remote chat-completions client, a scripted provider
//! for tests and replay, and an echo provider for smoke runs.

mod echo;
mod http;
mod scripted;

pub use echo::EchoProvider;
pub use http::{HttpProvider, HttpProviderConfig, PROVIDER_KEY_ENV};
pub use scripted::{ScriptedProvider, ScriptedResponse};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::suggestion::prompt::PromptBundle;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderResponse {
    pub raw_text: String,
    pub latency_ms: u64,
    pub provider_name: String,
    /// Verbatim request and response bodies, kept only when provider I/O
    /// logging is on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_body: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_body: Option<String>,
}

impl ProviderResponse {
    pub fn new(provider_name: impl Into<String>, raw_text: impl Into<String>, latency_ms: u64) -> Self {
        Self {
            raw_text: raw_text.into(),
            latency_ms,
            provider_name: provider_name.into(),
            request_body: None,
            response_body: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("provider timed out after {0} ms")]
    Timeout(u64),
    #[error("provider returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("provider transport error: {0}")]
    Transport(String),
    #[error("malformed provider response: {0}")]
    Malformed(String),
    /// A canned failure from a scripted fixture.
    #[error("{message}")]
    Scripted { message: String, latency_ms: u64 },
    /// A failure read back from a telemetry log during replay.
    #[error("{message}")]
    Recorded { message: String, latency_ms: Option<u64> },
    #[error("scripted provider has no response left for a {0} prompt")]
    Exhausted(&'static str),
}

impl ProviderError {
    /// Time the failed call took, when known.
    pub fn latency_ms(&self) -> Option<u64> {
        match self {
            ProviderError::Timeout(ms) => Some(*ms),
            ProviderError::Scripted { latency_ms, .. } => Some(*latency_ms),
            ProviderError::Recorded { latency_ms, .. } => *latency_ms,
            _ => None,
        }
    }
}

#[async_trait]
pub trait Provider: Send + Sync {
    fn name(&self) -> &str;

    async fn complete(&self, prompt: &PromptBundle) -> Result<ProviderResponse, ProviderError>;
}
