//! Previewing a suggestion as a diff against the current code.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::diff::{apply_hunks, compute_diff, ApplyError, DiffHunk};
use crate::ids::{DocId, PreviewId, SuggestionId};
use crate::text::fenced_blocks;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContentHash(pub String);

impl ContentHash {
    pub fn of(text: &str) -> Self {
        Self(hex::encode(Sha256::digest(text.as_bytes())))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PreviewError {
    #[error("the model reply contains no code block")]
    NoCode,
    #[error("the document changed since the preview was computed")]
    Stale,
    #[error("unknown hunk index {0}")]
    UnknownHunk(usize),
    #[error(transparent)]
    Apply(#[from] ApplyError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreviewResult {
    pub preview_id: PreviewId,
    pub suggestion_id: SuggestionId,
    pub doc_id: DocId,
    pub original_text: String,
    pub original_hash: ContentHash,
    pub proposed_text: String,
    pub hunks: Vec<DiffHunk>,
    pub provider_latency_ms: u64,
}

impl PreviewResult {
    pub fn new(
        preview_id: PreviewId,
        suggestion_id: SuggestionId,
        doc_id: DocId,
        original_text: String,
        proposed_text: String,
        provider_latency_ms: u64,
    ) -> Self {
        let hunks = compute_diff(&original_text, &proposed_text);
        Self {
            preview_id,
            suggestion_id,
            doc_id,
            original_hash: ContentHash::of(&original_text),
            original_text,
            proposed_text,
            hunks,
            provider_latency_ms,
        }
    }

    pub fn is_fresh(&self, current_text: &str) -> bool {
        ContentHash::of(current_text) == self.original_hash
    }

    /// Merge the hunks at `selected` (indices into `self.hunks`, any order)
    /// into `current_text`. `None` selects every hunk.
    pub fn merge(&self, current_text: &str, selected: Option<&[usize]>) -> Result<String, PreviewError> {
        if !self.is_fresh(current_text) {
            return Err(PreviewError::Stale);
        }
        let hunks: Vec<DiffHunk> = match selected {
            None => self.hunks.clone(),
            Some(idx) => {
                let mut idx = idx.to_vec();
                idx.sort_unstable();
                idx.dedup();
                idx.iter()
                    .map(|&i| self.hunks.get(i).cloned().ok_or(PreviewError::UnknownHunk(i)))
                    .collect::<Result<_, _>>()?
            }
        };
        Ok(apply_hunks(current_text, &hunks)?)
    }
}

/// The proposed file from a preview reply: the longest fenced block that is
/// not JSON, or `None`. A trailing newline on the original is kept, since
/// fenced bodies never end in one.
pub fn extract_proposed_code(raw: &str, original: &str) -> Option<String> {
    let block = fenced_blocks(raw)
        .into_iter()
        .filter(|b| !b.lang.eq_ignore_ascii_case("json"))
        .max_by_key(|b| b.body.len())?;
    let mut code = block.body;
    if original.ends_with('\n') && !code.ends_with('\n') {
        code.push('\n');
    }
    Some(code)
}
