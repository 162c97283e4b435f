//! Suggestion taxonomy, suggestion cards, prompt assembly and response parsing.

pub mod parse;
pub mod prompt;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ids::{BatchId, SuggestionId};
use crate::text::normalize_key;

/// The closed set of suggestion types a proactive batch may contain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuggestionCategory {
    ExplainCode,
    BrainstormFunctionality,
    CompleteCode,
    DocumentationPointer,
    DebugLatent,
    DebugRuntime,
    AddTests,
    ImproveEfficiency,
}

impl SuggestionCategory {
    pub const ALL: [SuggestionCategory; 8] = [
        SuggestionCategory::ExplainCode,
        SuggestionCategory::BrainstormFunctionality,
        SuggestionCategory::CompleteCode,
        SuggestionCategory::DocumentationPointer,
        SuggestionCategory::DebugLatent,
        SuggestionCategory::DebugRuntime,
        SuggestionCategory::AddTests,
        SuggestionCategory::ImproveEfficiency,
    ];

    /// Categories a debugging batch may contain.
    pub const DEBUG: [SuggestionCategory; 3] = [
        SuggestionCategory::DebugRuntime,
        SuggestionCategory::DebugLatent,
        SuggestionCategory::ExplainCode,
    ];

    pub fn key(self) -> &'static str {
        match self {
            SuggestionCategory::ExplainCode => "explain_code",
            SuggestionCategory::BrainstormFunctionality => "brainstorm_functionality",
            SuggestionCategory::CompleteCode => "complete_code",
            SuggestionCategory::DocumentationPointer => "documentation_pointer",
            SuggestionCategory::DebugLatent => "debug_latent",
            SuggestionCategory::DebugRuntime => "debug_runtime",
            SuggestionCategory::AddTests => "add_tests",
            SuggestionCategory::ImproveEfficiency => "improve_efficiency",
        }
    }

    pub fn display_label(self) -> &'static str {
        match self {
            SuggestionCategory::ExplainCode => "Explaining existing code",
            SuggestionCategory::BrainstormFunctionality => "Brainstorming new functionality",
            SuggestionCategory::CompleteCode => "Completing unfinished code",
            SuggestionCategory::DocumentationPointer => "Pointers to documentation",
            SuggestionCategory::DebugLatent => "Debugging (Latent errors)",
            SuggestionCategory::DebugRuntime => "Debugging (Runtime errors)",
            SuggestionCategory::AddTests => "Adding unit tests",
            SuggestionCategory::ImproveEfficiency => "Improving efficiency and modularity",
        }
    }

    /// Accepts the snake_case key or the display label, ignoring case and
    /// punctuation.
    pub fn parse_lenient(s: &str) -> Option<Self> {
        let norm = normalize_key(s);
        if norm.is_empty() {
            return None;
        }
        Self::ALL
            .into_iter()
            .find(|c| c.key() == norm || normalize_key(c.display_label()) == norm)
    }
}

impl fmt::Display for SuggestionCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuggestionOrigin {
    ProactiveStandard,
    ProactiveDebug,
    ManualRequest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuggestionState {
    Collapsed,
    Expanded,
    Accepted,
    Deleted,
}

impl SuggestionState {
    pub fn is_terminal(self) -> bool {
        matches!(self, SuggestionState::Accepted | SuggestionState::Deleted)
    }

    /// Whether `self -> to` is an edge of the lifecycle
    /// collapsed <-> expanded -> {accepted, deleted}. Clearing all suggestions
    /// is the one path from collapsed straight to deleted.
    pub fn can_transition(self, to: SuggestionState) -> bool {
        use SuggestionState::*;
        matches!(
            (self, to),
            (Collapsed, Expanded) | (Expanded, Collapsed) | (Expanded, Accepted) | (Expanded, Deleted)
        )
    }
}

pub const MAX_EXPLANATION_BULLETS: usize = 4;

/// One proactive suggestion card.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suggestion {
    pub suggestion_id: SuggestionId,
    pub category: SuggestionCategory,
    pub summary: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    pub explanation: Vec<String>,
    pub origin: SuggestionOrigin,
    pub state: SuggestionState,
    pub batch_id: BatchId,
}
