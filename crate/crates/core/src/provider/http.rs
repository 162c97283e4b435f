use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Provider, ProviderError, ProviderResponse};
use crate::session::types::ChatRole;
use crate::suggestion::prompt::{PromptBundle, PromptRole};

pub const PROVIDER_KEY_ENV: &str = "PROACTIVE_PROVIDER_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpProviderConfig {
    /// e.g. `https://api.openai.com/v1`; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    /// Keep request and response bodies on every [`ProviderResponse`].
    #[serde(default)]
    pub log_io: bool,
}

fn default_timeout_s() -> f64 {
    60.0
}

/// Client for an OpenAI-style chat-completions endpoint.
#[derive(Debug, Clone)]
pub struct HttpProvider {
    cfg: HttpProviderConfig,
    api_key: Option<String>,
    client: reqwest::Client,
}

impl HttpProvider {
    /// Reads the API key from `PROACTIVE_PROVIDER_KEY` if set.
    pub fn new(cfg: HttpProviderConfig) -> Self {
        let key = std::env::var(PROVIDER_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::with_key(cfg, key)
    }

    pub fn with_key(cfg: HttpProviderConfig, api_key: Option<String>) -> Self {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_s))
            .build()
            .expect("reqwest client builds");
        Self {
            cfg,
            api_key,
            client,
        }
    }

    pub fn request_body(&self, prompt: &PromptBundle) -> Value {
        let messages: Vec<Value> = prompt
            .messages
            .iter()
            .map(|m| {
                let role = match (m.role, m.speaker) {
                    (PromptRole::System, _) => "system",
                    (PromptRole::History, Some(ChatRole::Assistant)) => "assistant",
                    _ => "user",
                };
                json!({"role": role, "content": m.content})
            })
            .collect();
        let mut body = json!({"model": self.cfg.model, "messages": messages});
        if let Some(t) = self.cfg.temperature {
            body["temperature"] = json!(t);
        }
        body
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'))
    }
}

#[async_trait]
impl Provider for HttpProvider {
    fn name(&self) -> &str {
        "http"
    }

    async fn complete(&self, prompt: &PromptBundle) -> Result<ProviderResponse, ProviderError> {
        let body = self.request_body(prompt);
        let started = Instant::now();
        let mut req = self.client.post(self.endpoint()).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().await.map_err(|e| {
            if e.is_timeout() {
                ProviderError::Timeout(started.elapsed().as_millis() as u64)
            } else {
                ProviderError::Transport(e.to_string())
            }
        })?;
        let status = resp.status();
        let text = resp
            .text()
            .await
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let latency_ms = started.elapsed().as_millis() as u64;
        if !status.is_success() {
            return Err(ProviderError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        let parsed: Value =
            serde_json::from_str(&text).map_err(|e| ProviderError::Malformed(e.to_string()))?;
        let content = parsed
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| ProviderError::Malformed("no choices[0].message.content".into()))?;

        let mut out = ProviderResponse::new(self.name(), content, latency_ms);
        if self.cfg.log_io {
            out.request_body = Some(body.to_string());
            out.response_body = Some(text);
        }
        Ok(out)
    }
}
