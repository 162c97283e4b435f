//! Prompt assembly for standard and debugging suggestion batches, chat
//! replies and previews.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{Suggestion, SuggestionCategory};
use crate::condition::ConditionConfig;
use crate::runner::RunResult;
use crate::session::types::{ChatMessage, ChatRole};
use crate::text::{fenced, truncate_tail};

/// Error output beyond this many bytes is cut from the front.
pub const STDERR_TAIL_BYTES: usize = 8 * 1024;
pub const STDOUT_TAIL_BYTES: usize = 2 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Standard,
    Debug,
    Chat,
    Preview,
}

impl PromptKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::Standard => "standard",
            PromptKind::Debug => "debug",
            PromptKind::Chat => "chat",
            PromptKind::Preview => "preview",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptRole {
    System,
    History,
    Instruction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptMessage {
    pub role: PromptRole,
    /// Original chat role for history segments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker: Option<ChatRole>,
    pub content: String,
}

impl PromptMessage {
    fn system(content: String) -> Self {
        Self {
            role: PromptRole::System,
            speaker: None,
            content,
        }
    }

    fn instruction(content: String) -> Self {
        Self {
            role: PromptRole::Instruction,
            speaker: None,
            content,
        }
    }

    fn history(msg: &ChatMessage) -> Self {
        Self {
            role: PromptRole::History,
            speaker: Some(msg.role),
            content: msg.content.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub kind: PromptKind,
    pub messages: Vec<PromptMessage>,
    pub max_suggestions: usize,
}

impl PromptBundle {
    pub fn segments(&self, role: PromptRole) -> impl Iterator<Item = &PromptMessage> {
        self.messages.iter().filter(move |m| m.role == role)
    }

    /// Stable content hash, used to key scripted provider fixtures.
    pub fn hash_hex(&self) -> String {
        let json = serde_json::to_vec(self).expect("prompt bundles serialize");
        hex::encode(&Sha256::digest(json)[..8])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("debug prompts need an erroring run")]
pub struct NotAnError;

fn recent_history(history: &[ChatMessage], limit: usize) -> impl Iterator<Item = PromptMessage> + '_ {
    let start = history.len().saturating_sub(limit);
    history[start..].iter().map(PromptMessage::history)
}

fn taxonomy_scaffold() -> String {
    let mut s = String::from(
        "When choosing suggestions, consider the following types and pick the ones that fit \
         the code right now. Prefer a varied mix over several suggestions of one type.\n",
    );
    for c in SuggestionCategory::ALL {
        let hint = match c {
            SuggestionCategory::ExplainCode => "clarify what a non-obvious piece of the code does",
            SuggestionCategory::BrainstormFunctionality => "propose a feature or next step the code is missing",
            SuggestionCategory::CompleteCode => "finish a stub, TODO, or partially written function",
            SuggestionCategory::DocumentationPointer => "point to the library function or syntax that would help",
            SuggestionCategory::DebugLatent => "flag a bug that has not surfaced yet",
            SuggestionCategory::DebugRuntime => "fix an error the code raises when run",
            SuggestionCategory::AddTests => "write unit tests for existing functions",
            SuggestionCategory::ImproveEfficiency => "make the code faster, simpler or more modular",
        };
        s.push_str(&format!("- {} ({}): {}\n", c.display_label(), c.key(), hint));
    }
    s
}

fn format_directions(max: usize, allowed: &[SuggestionCategory]) -> String {
    let keys: Vec<_> = allowed.iter().map(|c| c.key()).collect();
    format!(
        "Return at most {max} suggestions as a JSON array inside a ```json fenced block, most \
         useful first. Each element is an object with these fields:\n\
         - \"type\": one of {}\n\
         - \"summary\": one sentence that starts with the suggestion type\n\
         - \"code\": optional code snippet implementing the suggestion\n\
         - \"explanation\": array of at most 4 short bullet strings\n\
         Do not add any text outside the fenced block.",
        keys.join(", ")
    )
}

const STANDARD_ROLE: &str = "You are a proactive programming assistant embedded in the \
programmer's editor. You offer short, actionable suggestions about the code they are working \
on without waiting to be asked.";

/// Standard batch: system segment, recent chat, then the code and format
/// directions.
pub fn build_standard_prompt(
    history: &[ChatMessage],
    code: &str,
    cfg: &ConditionConfig,
) -> PromptBundle {
    let mut system = String::from(STANDARD_ROLE);
    if cfg.guiding_prompts {
        system.push_str("\n\n");
        system.push_str(&taxonomy_scaffold());
    }
    let mut messages = vec![PromptMessage::system(system)];
    messages.extend(recent_history(history, cfg.history_limit));
    messages.push(PromptMessage::instruction(format!(
        "This is the programmer's current code:\n{}\n\n\
         Suggest what would help them next. Do not repeat questions already asked or \
         suggestions already accepted in the conversation above.\n\n{}",
        fenced(code),
        format_directions(cfg.suggestions_per_batch, &SuggestionCategory::ALL)
    )));
    PromptBundle {
        kind: PromptKind::Standard,
        messages,
        max_suggestions: cfg.suggestions_per_batch,
    }
}

/// Debug batch: recent chat, then a single instruction with the code, the
/// error output and a restricted set of types.
pub fn build_debug_prompt(
    history: &[ChatMessage],
    code: &str,
    cfg: &ConditionConfig,
    run: &RunResult,
) -> Result<PromptBundle, NotAnError> {
    if !run.is_error {
        return Err(NotAnError);
    }
    let mut instruction = format!(
        "The programmer just ran the code below and it failed. Focus on the error output and \
         on what in the code causes it.\n\nCode:\n{}\n\nError output from the terminal:\n{}\n",
        fenced(code),
        fenced(&truncate_tail(&run.stderr, STDERR_TAIL_BYTES)),
    );
    if !run.stdout.trim().is_empty() {
        instruction.push_str(&format!(
            "\nStandard output (tail):\n{}\n",
            fenced(&truncate_tail(&run.stdout, STDOUT_TAIL_BYTES))
        ));
    }
    instruction.push('\n');
    instruction.push_str(&format_directions(cfg.suggestions_per_batch, &SuggestionCategory::DEBUG));

    let mut messages: Vec<_> = recent_history(history, cfg.history_limit).collect();
    messages.push(PromptMessage::instruction(instruction));
    Ok(PromptBundle {
        kind: PromptKind::Debug,
        messages,
        max_suggestions: cfg.suggestions_per_batch,
    })
}

/// Ordinary chat reply. Without proactivity the assistant does not see the
/// editor, matching a stand-alone chat tool.
pub fn build_chat_prompt(history: &[ChatMessage], code: &str, cfg: &ConditionConfig) -> PromptBundle {
    let mut system = String::from(
        "You are a helpful programming assistant. Answer in natural language and include code \
         snippets in fenced blocks where useful.",
    );
    if cfg.proactive_enabled {
        system.push_str(&format!(
            "\n\nThe programmer's current code:\n{}",
            fenced(code)
        ));
    }
    let mut messages = vec![PromptMessage::system(system)];
    messages.extend(recent_history(history, cfg.history_limit));
    PromptBundle {
        kind: PromptKind::Chat,
        messages,
        max_suggestions: 0,
    }
}

/// Ask for the whole file with `suggestion` integrated.
pub fn build_preview_prompt(code: &str, suggestion: &Suggestion) -> PromptBundle {
    let mut described = suggestion.summary.clone();
    for bullet in &suggestion.explanation {
        described.push_str(&format!("\n- {bullet}"));
    }
    if let Some(snippet) = &suggestion.code {
        described.push_str(&format!("\n\nSuggested code:\n{}", fenced(snippet)));
    }
    PromptBundle {
        kind: PromptKind::Preview,
        messages: vec![
            PromptMessage::system(
                "You integrate a suggested change into existing code. Keep everything else \
                 unchanged. Reply with the complete updated file in a single fenced code block."
                    .into(),
            ),
            PromptMessage::instruction(format!(
                "Current code:\n{}\n\nSuggestion to integrate:\n{}",
                fenced(code),
                described
            )),
        ],
        max_suggestions: 0,
    }
}
