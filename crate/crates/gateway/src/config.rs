//! Server configuration file (TOML).
//!
//! ```toml
//! [server]
//! bind = "127.0.0.1:8080"
//!
//! [provider]
//! kind = "http"
//! base_url = "https://api.openai.com/v1"
//! model = "gpt-4o"
//!
//! [runner]
//! command = ["python3", "{file}"]
//! timeout_s = 10
//!
//! [telemetry]
//! dir = "telemetry"
//! layout = "per_session"
//!
//! [conditions]
//! registry_path = "conditions.toml"
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use proactive_core::provider::HttpProviderConfig;
use proactive_core::runner::DEFAULT_ERROR_PATTERN;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    #[serde(default)]
    pub server: ServerConfig,
    #[serde(default)]
    pub provider: ProviderConfig,
    /// No runner section means runs are refused.
    #[serde(default)]
    pub runner: Option<RunnerConfig>,
    #[serde(default)]
    pub telemetry: TelemetryConfig,
    #[serde(default)]
    pub conditions: ConditionsConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    /// Real-time spacing of clock ticks delivered to sessions.
    #[serde(default = "default_tick_ms")]
    pub tick_interval_ms: u64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            bind: default_bind(),
            tick_interval_ms: default_tick_ms(),
        }
    }
}

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}

fn default_tick_ms() -> u64 {
    1_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
#[derive(Default)]
pub enum ProviderConfig {
    #[default]
    Echo,
    Scripted { dir: PathBuf },
    Http(HttpProviderConfig),
}


#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunnerConfig {
    /// Program and arguments; `{file}` is replaced by the path of the code
    /// file and `{dir}` by its directory.
    pub command: Vec<String>,
    #[serde(default = "default_file_name")]
    pub file_name: String,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: f64,
    /// Per stream.
    #[serde(default = "default_output_cap")]
    pub output_cap_bytes: usize,
    #[serde(default = "default_error_pattern")]
    pub error_pattern: String,
}

fn default_file_name() -> String {
    "main.py".into()
}

fn default_timeout_s() -> f64 {
    10.0
}

fn default_output_cap() -> usize {
    64 * 1024
}

fn default_error_pattern() -> String {
    DEFAULT_ERROR_PATTERN.into()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogLayout {
    /// One file per session, named after the session id.
    #[default]
    PerSession,
    /// Every session appends to `telemetry.jsonl`.
    Shared,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TelemetryConfig {
    #[serde(default = "default_telemetry_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub layout: LogLayout,
}

impl Default for TelemetryConfig {
    fn default() -> Self {
        Self {
            dir: default_telemetry_dir(),
            layout: LogLayout::default(),
        }
    }
}

fn default_telemetry_dir() -> PathBuf {
    "telemetry".into()
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionsConfig {
    /// Extra condition definitions on top of the built-ins.
    pub registry_path: Option<PathBuf>,
}

impl GatewayConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Relative paths in the file are resolved against its directory.
    pub fn load(path: impl AsRef<Path>) -> anyhow::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.telemetry.dir);
        if let Some(p) = &mut self.conditions.registry_path {
            fix(p);
        }
        if let ProviderConfig::Scripted { dir } = &mut self.provider {
            fix(dir);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = GatewayConfig::from_toml("").unwrap();
        assert_eq!(cfg.server.bind, "127.0.0.1:8080");
        assert!(matches!(cfg.provider, ProviderConfig::Echo));
        assert!(cfg.runner.is_none());
        assert_eq!(cfg.telemetry.layout, LogLayout::PerSession);
    }

    #[test]
    fn full_file_parses() {
        let cfg = GatewayConfig::from_toml(
            r#"
            [server]
            bind = "0.0.0.0:9000"
            [provider]
            kind = "http"
            base_url = "http://localhost:11434/v1"
            model = "llama3"
            [runner]
            command = ["python3", "{file}"]
            [telemetry]
            dir = "/var/log/proactive"
            layout = "shared"
            [conditions]
            registry_path = "conds.toml"
            "#,
        )
        .unwrap();
        let ProviderConfig::Http(http) = &cfg.provider else { panic!("{:?}", cfg.provider) };
        assert_eq!(http.model, "llama3");
        let runner = cfg.runner.unwrap();
        assert_eq!(runner.timeout_s, 10.0);
        assert_eq!(runner.output_cap_bytes, 65_536);
        assert_eq!(cfg.telemetry.layout, LogLayout::Shared);
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let mut cfg = GatewayConfig::from_toml("[provider]\nkind = \"scripted\"\ndir = \"fx\"\n").unwrap();
        cfg.resolve_paths(Path::new("/etc/proactive"));
        let ProviderConfig::Scripted { dir } = cfg.provider else { unreachable!() };
        assert_eq!(dir, Path::new("/etc/proactive/fx"));
        assert_eq!(cfg.telemetry.dir, Path::new("/etc/proactive/telemetry"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(GatewayConfig::from_toml("[server]\nport = 1\n").is_err());
    }
}
