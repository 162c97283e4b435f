//! Where session logs live on disk.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use proactive_core::telemetry::{header_line, EventSink, JsonlFileSink, TelemetryEvent};

use crate::config::{LogLayout, TelemetryConfig};
use crate::error::{ApiError, ErrorCode};

pub const SHARED_LOG: &str = "telemetry.jsonl";

pub struct LogStore {
    dir: PathBuf,
    layout: LogLayout,
    /// One open file per path, shared by every session writing to it.
    open: Mutex<HashMap<PathBuf, Arc<JsonlFileSink>>>,
}

impl LogStore {
    pub fn new(cfg: &TelemetryConfig) -> Self {
        Self {
            dir: cfg.dir.clone(),
            layout: cfg.layout,
            open: Mutex::new(HashMap::new()),
        }
    }

    pub fn path_for(&self, session_id: &str) -> PathBuf {
        match self.layout {
            LogLayout::PerSession => self.dir.join(format!("{session_id}.jsonl")),
            LogLayout::Shared => self.dir.join(SHARED_LOG),
        }
    }

    pub fn sink_for(&self, session_id: &str) -> Result<(Arc<dyn EventSink>, PathBuf), ApiError> {
        let path = self.path_for(session_id);
        let mut open = self.open.lock().expect("log store");
        let sink = match open.get(&path) {
            Some(s) => s.clone(),
            None => {
                let s = Arc::new(
                    JsonlFileSink::open(&path).map_err(|e| ApiError::new(ErrorCode::BadState, e.to_string()))?,
                );
                open.insert(path.clone(), s.clone());
                s
            }
        };
        Ok((sink, path))
    }

    /// The header plus this session's lines, byte for byte as written.
    pub fn session_text(&self, path: &Path, session_id: &str) -> Result<String, ApiError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ApiError::new(ErrorCode::NotFound, format!("{}: {e}", path.display())))?;
        let mut out = header_line();
        out.push('\n');
        let mut found = false;
        for line in text.lines() {
            let ours = serde_json::from_str::<TelemetryEvent>(line).is_ok_and(|e| e.session_id.as_str() == session_id);
            if ours {
                found = true;
                out.push_str(line);
                out.push('\n');
            }
        }
        if !found {
            return Err(ApiError::session_not_found(session_id));
        }
        Ok(out)
    }
}
