use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{Provider, ProviderError, ProviderResponse};
use crate::error::ConfigError;
use crate::suggestion::prompt::{PromptBundle, PromptKind};

pub const DEFAULT_SCRIPTED_LATENCY_MS: u64 = 1_000;

/// One canned reply. `.json` fixtures deserialize into this directly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedResponse {
    #[serde(default)]
    pub raw_text: String,
    #[serde(default = "default_latency")]
    pub latency_ms: u64,
    /// When set, the call fails with this message instead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn default_latency() -> u64 {
    DEFAULT_SCRIPTED_LATENCY_MS
}

impl ScriptedResponse {
    pub fn text(raw_text: impl Into<String>, latency_ms: u64) -> Self {
        Self {
            raw_text: raw_text.into(),
            latency_ms,
            error: None,
        }
    }

    pub fn failure(message: impl Into<String>, latency_ms: u64) -> Self {
        Self {
            raw_text: String::new(),
            latency_ms,
            error: Some(message.into()),
        }
    }
}

#[derive(Debug, Default)]
struct Script {
    keyed: HashMap<String, ScriptedResponse>,
    by_kind: HashMap<PromptKind, VecDeque<ScriptedResponse>>,
    general: VecDeque<ScriptedResponse>,
}

/// Replays fixtures. A prompt is answered by, in order: a response keyed by
/// its hash, the next response queued for its kind, the next general one.
///
/// Fixture directories use the file name to pick the bucket: `hash-<hex>.*`
/// is keyed, a name containing `standard`, `debug`, `chat` or `preview` goes
/// to that kind's queue, anything else to the general queue. Queues follow
/// lexicographic file-name order.
#[derive(Debug, Default)]
pub struct ScriptedProvider {
    script: Mutex<Script>,
}

impl ScriptedProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, kind: Option<PromptKind>, response: ScriptedResponse) -> &Self {
        let mut s = self.script.lock().expect("script lock");
        match kind {
            Some(k) => s.by_kind.entry(k).or_default().push_back(response),
            None => s.general.push_back(response),
        }
        self
    }

    pub fn insert_keyed(&self, hash: impl Into<String>, response: ScriptedResponse) -> &Self {
        self.script
            .lock()
            .expect("script lock")
            .keyed
            .insert(hash.into(), response);
        self
    }

    pub fn remaining(&self) -> usize {
        let s = self.script.lock().expect("script lock");
        s.general.len() + s.by_kind.values().map(VecDeque::len).sum::<usize>()
    }

    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let dir = dir.as_ref();
        let io_err = |e: std::io::Error| ConfigError::Io {
            path: dir.display().to_string(),
            message: e.to_string(),
        };
        let mut files: Vec<_> = std::fs::read_dir(dir)
            .map_err(io_err)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();

        let provider = Self::new();
        for path in files {
            let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
            if ext != "txt" && ext != "json" {
                continue;
            }
            let content = std::fs::read_to_string(&path).map_err(|e| ConfigError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            let response = if ext == "json" {
                serde_json::from_str(&content)
                    .map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?
            } else {
                ScriptedResponse::text(content, DEFAULT_SCRIPTED_LATENCY_MS)
            };
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
            if let Some(hash) = stem.strip_prefix("hash-") {
                provider.insert_keyed(hash, response);
            } else {
                provider.push(kind_from_name(stem), response);
            }
        }
        Ok(provider)
    }

    fn take(&self, prompt: &PromptBundle) -> Option<ScriptedResponse> {
        let mut s = self.script.lock().expect("script lock");
        if !s.keyed.is_empty() {
            if let Some(r) = s.keyed.get(&prompt.hash_hex()) {
                return Some(r.clone());
            }
        }
        if let Some(r) = s.by_kind.get_mut(&prompt.kind).and_then(VecDeque::pop_front) {
            return Some(r);
        }
        s.general.pop_front()
    }
}

fn kind_from_name(stem: &str) -> Option<PromptKind> {
    let lower = stem.to_ascii_lowercase();
    [
        PromptKind::Standard,
        PromptKind::Debug,
        PromptKind::Chat,
        PromptKind::Preview,
    ]
    .into_iter()
    .find(|k| lower.contains(k.as_str()))
}

#[async_trait]
impl Provider for ScriptedProvider {
    fn name(&self) -> &str {
        "scripted"
    }

    async fn complete(&self, prompt: &PromptBundle) -> Result<ProviderResponse, ProviderError> {
        let r = self
            .take(prompt)
            .ok_or(ProviderError::Exhausted(prompt.kind.as_str()))?;
        match r.error {
            Some(message) => Err(ProviderError::Scripted {
                message,
                latency_ms: r.latency_ms,
            }),
            None => Ok(ProviderResponse::new(self.name(), r.raw_text, r.latency_ms)),
        }
    }
}
