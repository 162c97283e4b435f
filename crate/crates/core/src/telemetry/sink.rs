use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde_json::Value;
use thiserror::Error;

use super::{header_line, TelemetryEvent};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("telemetry sink failure: {0}")]
pub struct SinkError(pub String);

/// Where events go. `append` returns only once the event is durable as far
/// as the sink can tell.
pub trait EventSink: Send + Sync {
    fn append(&self, event: &TelemetryEvent) -> Result<(), SinkError>;
}

#[derive(Debug, Default)]
pub struct MemorySink {
    events: Mutex<Vec<TelemetryEvent>>,
}

impl MemorySink {
    pub fn events(&self) -> Vec<TelemetryEvent> {
        self.events.lock().expect("memory sink").clone()
    }

    /// The log as it would appear on disk.
    pub fn to_jsonl(&self) -> String {
        let mut out = header_line();
        out.push('\n');
        for e in self.events.lock().expect("memory sink").iter() {
            out.push_str(&e.to_line());
            out.push('\n');
        }
        out
    }
}

impl EventSink for MemorySink {
    fn append(&self, event: &TelemetryEvent) -> Result<(), SinkError> {
        self.events.lock().expect("memory sink").push(event.clone());
        Ok(())
    }
}

/// A JSON-lines file. One instance can be shared by many sessions; writes
/// are serialized by an internal lock and flushed per event.
#[derive(Debug)]
pub struct JsonlFileSink {
    path: PathBuf,
    file: Mutex<File>,
}

impl JsonlFileSink {
    /// Opens for appending, writing the header if the file is new or empty.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, SinkError> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| SinkError(format!("{}: {e}", dir.display())))?;
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| SinkError(format!("{}: {e}", path.display())))?;
        let empty = file
            .metadata()
            .map_err(|e| SinkError(e.to_string()))?
            .len()
            == 0;
        if empty {
            writeln!(file, "{}", header_line()).map_err(|e| SinkError(e.to_string()))?;
            file.flush().map_err(|e| SinkError(e.to_string()))?;
        }
        Ok(Self {
            path,
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl EventSink for JsonlFileSink {
    fn append(&self, event: &TelemetryEvent) -> Result<(), SinkError> {
        let mut line = event.to_line();
        line.push('\n');
        let mut file = self.file.lock().map_err(|_| SinkError("poisoned lock".into()))?;
        file.write_all(line.as_bytes())
            .and_then(|_| file.flush())
            .map_err(|e| SinkError(format!("{}: {e}", self.path.display())))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LogContents {
    pub schema_version: Option<u64>,
    pub events: Vec<TelemetryEvent>,
    /// Lines that were neither a header nor a valid event.
    pub malformed: usize,
}

pub fn parse_log(text: &str) -> LogContents {
    let mut out = LogContents::default();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match serde_json::from_str::<Value>(line) {
            Ok(v) if v.get("kind").is_none() && v.get("schema_version").is_some() => {
                out.schema_version = out.schema_version.or(v["schema_version"].as_u64());
            }
            Ok(v) => match serde_json::from_value::<TelemetryEvent>(v) {
                Ok(e) => out.events.push(e),
                Err(_) => out.malformed += 1,
            },
            Err(_) => out.malformed += 1,
        }
    }
    out
}

pub fn read_log(path: impl AsRef<Path>) -> std::io::Result<LogContents> {
    let bytes = std::fs::read(path)?;
    Ok(parse_log(&String::from_utf8_lossy(&bytes)))
}
