use serde::{Deserialize, Serialize};

use crate::clock::Millis;
use crate::ids::{DocId, SuggestionId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeDocument {
    pub doc_id: DocId,
    pub text: String,
    /// Strictly increases on every text change, starting at 1.
    pub version: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChatRole {
    User,
    Assistant,
    /// An accepted suggestion, shown on the user's side of the chat.
    AcceptedSuggestion,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
    pub code_blocks: Vec<String>,
    pub ts: Millis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suggestion_id: Option<SuggestionId>,
}

impl ChatMessage {
    pub fn new(role: ChatRole, content: impl Into<String>, ts: Millis) -> Self {
        let content = content.into();
        let code_blocks = crate::text::fenced_blocks(&content)
            .into_iter()
            .map(|b| b.body)
            .collect();
        Self {
            role,
            content,
            code_blocks,
            ts,
            suggestion_id: None,
        }
    }
}
