//! Experiment conditions: the tunable proactivity parameters for one study arm.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::clock::Millis;
use crate::error::ConfigError;

pub const BASELINE: &str = "baseline";
pub const SUGGEST: &str = "suggest";
pub const SUGGEST_PREVIEW: &str = "suggest_preview";
pub const PERSISTENT_SUGGEST: &str = "persistent_suggest";

pub const DEFAULT_HISTORY_LIMIT: usize = 40;
pub const MAX_SUGGESTIONS_PER_BATCH: usize = 10;

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }

    pub mod opt {
        use std::time::Duration;

        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(d: &Option<Duration>, s: S) -> Result<S::Ok, S::Error> {
            match d {
                Some(d) => s.serialize_some(&d.as_secs_f64()),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Duration>, D::Error> {
            Option::<f64>::deserialize(d)?
                .map(|v| Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom))
                .transpose()
        }
    }
}

/// All proactivity parameters of one condition.
///
/// The serialized field names double as the condition-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionConfig {
    pub name: String,
    pub proactive_enabled: bool,
    pub preview_enabled: bool,
    /// Inactivity before a standard batch may be requested.
    #[serde(rename = "idle_threshold_s", with = "secs")]
    pub idle_threshold: Duration,
    /// Minimum spacing between displayed standard batches, measured from the
    /// last suggestion display, suggestion interaction or chat.
    #[serde(rename = "cooldown_s", with = "secs")]
    pub cooldown: Duration,
    pub suggestions_per_batch: usize,
    /// Scaffold the suggestion taxonomy into the system segment.
    pub guiding_prompts: bool,
    /// Pause after the last keystroke before typing counts as stopped.
    /// Falls back to `idle_threshold` when unset.
    #[serde(
        rename = "typing_resume_grace_s",
        with = "secs::opt",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub typing_resume_grace: Option<Duration>,
    #[serde(default = "default_history_limit")]
    pub history_limit: usize,
}

fn default_history_limit() -> usize {
    DEFAULT_HISTORY_LIMIT
}

impl ConditionConfig {
    pub fn baseline() -> Self {
        Self {
            name: BASELINE.into(),
            proactive_enabled: false,
            preview_enabled: false,
            idle_threshold: Duration::from_secs(5),
            cooldown: Duration::from_secs(20),
            suggestions_per_batch: 3,
            guiding_prompts: false,
            typing_resume_grace: None,
            history_limit: DEFAULT_HISTORY_LIMIT,
        }
    }

    pub fn suggest() -> Self {
        Self {
            name: SUGGEST.into(),
            proactive_enabled: true,
            guiding_prompts: true,
            ..Self::baseline()
        }
    }

    pub fn suggest_preview() -> Self {
        Self {
            name: SUGGEST_PREVIEW.into(),
            preview_enabled: true,
            ..Self::suggest()
        }
    }

    /// Shorter wait between suggestions, larger batches, no taxonomy scaffold.
    pub fn persistent_suggest() -> Self {
        Self {
            name: PERSISTENT_SUGGEST.into(),
            cooldown: Duration::from_secs(5),
            suggestions_per_batch: 5,
            guiding_prompts: false,
            ..Self::suggest()
        }
    }

    pub fn builtins() -> Vec<Self> {
        vec![
            Self::baseline(),
            Self::suggest(),
            Self::suggest_preview(),
            Self::persistent_suggest(),
        ]
    }

    pub fn idle_threshold_ms(&self) -> Millis {
        self.idle_threshold.as_millis() as Millis
    }

    pub fn cooldown_ms(&self) -> Millis {
        self.cooldown.as_millis() as Millis
    }

    pub fn typing_resume_grace_ms(&self) -> Millis {
        self.typing_resume_grace
            .unwrap_or(self.idle_threshold)
            .as_millis() as Millis
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::InvalidCondition {
            name: self.name.clone(),
            reason: msg,
        });
        if self.name.trim().is_empty() {
            return bad("name must not be empty".into());
        }
        if self.idle_threshold.is_zero() {
            return bad("idle_threshold_s must be positive".into());
        }
        if !(1..=MAX_SUGGESTIONS_PER_BATCH).contains(&self.suggestions_per_batch) {
            return bad(format!(
                "suggestions_per_batch must be within 1..={MAX_SUGGESTIONS_PER_BATCH}"
            ));
        }
        if self.history_limit == 0 {
            return bad("history_limit must be positive".into());
        }
        if self.preview_enabled && !self.proactive_enabled {
            return bad("preview requires proactive suggestions".into());
        }
        Ok(())
    }
}

/// Either a registered condition name or an inline custom config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConditionRef {
    Named(String),
    Custom(ConditionConfig),
}

impl From<&str> for ConditionRef {
    fn from(name: &str) -> Self {
        ConditionRef::Named(name.to_string())
    }
}

impl From<ConditionConfig> for ConditionRef {
    fn from(cfg: ConditionConfig) -> Self {
        ConditionRef::Custom(cfg)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConditionFile {
    #[serde(default)]
    condition: Vec<ConditionConfig>,
}

#[derive(Debug, Clone)]
pub struct ConditionRegistry {
    conditions: BTreeMap<String, ConditionConfig>,
}

impl Default for ConditionRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl ConditionRegistry {
    pub fn with_builtins() -> Self {
        let conditions = ConditionConfig::builtins()
            .into_iter()
            .map(|c| (c.name.clone(), c))
            .collect();
        Self { conditions }
    }

    pub fn insert(&mut self, cfg: ConditionConfig) -> Result<(), ConfigError> {
        cfg.validate()?;
        self.conditions.insert(cfg.name.clone(), cfg);
        Ok(())
    }

    /// Parse `[[condition]]` tables from TOML text and register them,
    /// replacing built-ins with the same name.
    pub fn load_str(&mut self, text: &str) -> Result<usize, ConfigError> {
        let file: ConditionFile =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let n = file.condition.len();
        for cfg in file.condition {
            self.insert(cfg)?;
        }
        Ok(n)
    }

    pub fn load_file(&mut self, path: impl AsRef<Path>) -> Result<usize, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        self.load_str(&text)
    }

    pub fn get(&self, name: &str) -> Result<&ConditionConfig, ConfigError> {
        self.conditions
            .get(name)
            .ok_or_else(|| ConfigError::UnknownCondition(name.to_string()))
    }

    pub fn resolve(&self, cond: &ConditionRef) -> Result<ConditionConfig, ConfigError> {
        match cond {
            ConditionRef::Named(name) => self.get(name).cloned(),
            ConditionRef::Custom(cfg) => {
                cfg.validate()?;
                Ok(cfg.clone())
            }
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.conditions.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ConditionConfig> {
        self.conditions.values()
    }
}
