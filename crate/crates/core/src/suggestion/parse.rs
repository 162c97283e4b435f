//! Turn raw model output into an ordered list of suggestions.
//!
//! The primary format is a JSON array of `{type, summary, code?,
//! explanation}` objects, usually inside a fenced block. When no such array
//! can be found the parser falls back to a numbered list:
//!
//! ````text
//! 1. [Adding unit tests] Add tests for apply_discount.
//!    - covers negative discounts
//!    ```python
//!    def test_discount(): ...
//!    ```
//! ````
//!
//! Parsing never fails on arbitrary input; it reports how many entries it
//! had to skip.

use std::sync::OnceLock;

use regex::Regex;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use super::{SuggestionCategory, MAX_EXPLANATION_BULLETS};
use crate::text::{dedent, fenced_blocks};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParsedSuggestion {
    pub category: SuggestionCategory,
    pub summary: String,
    pub code: Option<String>,
    pub explanation: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParsedBatch {
    pub suggestions: Vec<ParsedSuggestion>,
    /// Entries skipped because they were malformed, used an unknown or
    /// disallowed type, or had no summary.
    pub warnings: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseFailure {
    #[error("model response was empty")]
    Empty,
    #[error("no valid suggestions in model response ({warnings} entries skipped)")]
    NoValidEntries { warnings: usize },
}

impl ParseFailure {
    pub fn warnings(&self) -> usize {
        match self {
            ParseFailure::Empty => 0,
            ParseFailure::NoValidEntries { warnings } => *warnings,
        }
    }
}

/// Parse at most `max_n` suggestions, keeping the order of the response.
pub fn parse_suggestions(raw: &str, max_n: usize) -> Result<ParsedBatch, ParseFailure> {
    parse_suggestions_with(raw, max_n, &SuggestionCategory::ALL)
}

/// Like [`parse_suggestions`] but entries whose type is not in `allowed` are
/// skipped with a warning.
pub fn parse_suggestions_with(
    raw: &str,
    max_n: usize,
    allowed: &[SuggestionCategory],
) -> Result<ParsedBatch, ParseFailure> {
    if raw.trim().is_empty() {
        return Err(ParseFailure::Empty);
    }
    let mut batch = ParsedBatch {
        suggestions: Vec::new(),
        warnings: 0,
    };
    match find_json_entries(raw) {
        Some(entries) => {
            for entry in entries {
                if batch.suggestions.len() >= max_n {
                    break;
                }
                match entry_from_json(&entry).filter(|s| allowed.contains(&s.category)) {
                    Some(s) => batch.suggestions.push(s),
                    None => batch.warnings += 1,
                }
            }
        }
        None => {
            for entry in numbered_entries(raw) {
                if batch.suggestions.len() >= max_n {
                    break;
                }
                match entry.filter(|s| allowed.contains(&s.category)) {
                    Some(s) => batch.suggestions.push(s),
                    None => batch.warnings += 1,
                }
            }
        }
    }
    if batch.suggestions.is_empty() {
        return Err(ParseFailure::NoValidEntries {
            warnings: batch.warnings,
        });
    }
    Ok(batch)
}

/// Lossy entry point for byte input.
pub fn parse_suggestions_bytes(raw: &[u8], max_n: usize) -> Result<ParsedBatch, ParseFailure> {
    parse_suggestions(&String::from_utf8_lossy(raw), max_n)
}

fn find_json_entries(raw: &str) -> Option<Vec<Value>> {
    let blocks = fenced_blocks(raw);
    let json_first = blocks
        .iter()
        .filter(|b| b.lang.eq_ignore_ascii_case("json"))
        .chain(blocks.iter().filter(|b| !b.lang.eq_ignore_ascii_case("json")))
        .map(|b| b.body.as_str());
    let bracketed = match (raw.find('['), raw.rfind(']')) {
        (Some(a), Some(b)) if a < b => Some(&raw[a..=b]),
        _ => None,
    };
    json_first
        .chain(std::iter::once(raw.trim()))
        .chain(bracketed)
        .find_map(|candidate| match serde_json::from_str::<Value>(candidate.trim()) {
            Ok(Value::Array(items)) => Some(items),
            Ok(Value::Object(mut obj)) => match obj.remove("suggestions") {
                Some(Value::Array(items)) => Some(items),
                _ => None,
            },
            _ => None,
        })
}

fn entry_from_json(value: &Value) -> Option<ParsedSuggestion> {
    let obj = value.as_object()?;
    let category = obj
        .get("type")
        .or_else(|| obj.get("category"))
        .and_then(Value::as_str)
        .and_then(SuggestionCategory::parse_lenient)?;
    let summary = obj.get("summary").and_then(Value::as_str)?;
    let code = obj.get("code").and_then(Value::as_str);
    let explanation: Vec<String> = match obj.get("explanation") {
        Some(Value::Array(items)) => items
            .iter()
            .filter_map(Value::as_str)
            .map(str::to_string)
            .collect(),
        Some(Value::String(s)) => s.lines().map(str::to_string).collect(),
        _ => Vec::new(),
    };
    build(category, summary, code, explanation)
}

fn build(
    category: SuggestionCategory,
    summary: &str,
    code: Option<&str>,
    explanation: Vec<String>,
) -> Option<ParsedSuggestion> {
    let summary = summary.split_whitespace().collect::<Vec<_>>().join(" ");
    if summary.is_empty() {
        return None;
    }
    let label = category.display_label();
    let summary = if summary.to_lowercase().starts_with(&label.to_lowercase()) {
        summary
    } else {
        format!("{label}: {summary}")
    };
    let code = code
        .map(unwrap_fence)
        .filter(|c| !c.trim().is_empty());
    let explanation = explanation
        .iter()
        .map(|b| strip_bullet(b).to_string())
        .filter(|b| !b.is_empty())
        .take(MAX_EXPLANATION_BULLETS)
        .collect();
    Some(ParsedSuggestion {
        category,
        summary,
        code,
        explanation,
    })
}

fn unwrap_fence(code: &str) -> String {
    match fenced_blocks(code).into_iter().next() {
        Some(block) if code.trim_start().starts_with("```") => block.body,
        _ => code.trim_matches('\n').to_string(),
    }
}

fn strip_bullet(line: &str) -> &str {
    let t = line.trim();
    t.strip_prefix("- ")
        .or_else(|| t.strip_prefix("* "))
        .or_else(|| t.strip_prefix("• "))
        .unwrap_or(t)
        .trim()
}

fn header_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s{0,3}(\d{1,3})[.)]\s+(.*)$").expect("valid regex"))
}

fn bullet_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*[-*•]\s+(.*)$").expect("valid regex"))
}

/// Split a header like `**Adding unit tests**: Add tests` into a category and
/// the remaining summary.
fn split_header(header: &str) -> Option<(SuggestionCategory, String)> {
    let h = header.replace("**", "");
    let h = h.trim();
    if let Some(rest) = h.strip_prefix('[') {
        let (label, summary) = rest.split_once(']')?;
        let summary = summary.trim_start_matches([':', '-', ' ']).trim();
        return Some((SuggestionCategory::parse_lenient(label)?, summary.to_string()));
    }
    for sep in [":", " - ", " \u{2014} "] {
        if let Some((label, summary)) = h.split_once(sep) {
            if let Some(c) = SuggestionCategory::parse_lenient(label) {
                return Some((c, summary.trim().to_string()));
            }
        }
    }
    None
}

fn numbered_entries(raw: &str) -> Vec<Option<ParsedSuggestion>> {
    struct Pending<'a> {
        header: &'a str,
        body: Vec<&'a str>,
    }

    let mut pending: Vec<Pending> = Vec::new();
    let mut in_fence = false;
    for line in raw.lines() {
        if line.trim_start().starts_with("```") {
            in_fence = !in_fence;
        }
        if !in_fence {
            if let Some(caps) = header_re().captures(line) {
                let header = caps.get(2).map_or("", |m| m.as_str());
                pending.push(Pending {
                    header,
                    body: Vec::new(),
                });
                continue;
            }
        }
        if let Some(p) = pending.last_mut() {
            p.body.push(line);
        }
    }

    pending
        .into_iter()
        .map(|p| {
            let (category, summary) = split_header(p.header)?;
            let body = p.body.join("\n");
            let code = fenced_blocks(&body).into_iter().next().map(|b| dedent(&b.body));
            let mut bullets = Vec::new();
            let mut fence = false;
            for line in &p.body {
                if line.trim_start().starts_with("```") {
                    fence = !fence;
                    continue;
                }
                if !fence {
                    if let Some(c) = bullet_re().captures(line) {
                        bullets.push(c[1].to_string());
                    }
                }
            }
            build(category, &summary, code.as_deref(), bullets)
        })
        .collect()
}
