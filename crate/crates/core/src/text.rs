//! Small text helpers shared by the parser, prompt builder and preview.

use std::borrow::Cow;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FencedBlock {
    /// Info string after the opening fence, e.g. `python` or `json`.
    pub lang: String,
    pub body: String,
}

/// Fenced code blocks in order of appearance. An unterminated final block
/// runs to the end of the text.
pub fn fenced_blocks(text: &str) -> Vec<FencedBlock> {
    let mut blocks = Vec::new();
    // (fence width, info string, body lines)
    let mut open: Option<(usize, String, Vec<&str>)> = None;
    for line in text.split('\n') {
        let line = line.strip_suffix('\r').unwrap_or(line);
        let trimmed = line.trim();
        let ticks = trimmed.len() - trimmed.trim_start_matches('`').len();
        match open.as_mut() {
            None if ticks >= 3 => {
                open = Some((ticks, trimmed[ticks..].trim().to_string(), Vec::new()));
            }
            None => {}
            Some((width, _, _)) if ticks >= *width && ticks == trimmed.len() => {
                let (_, lang, body) = open.take().expect("open block");
                blocks.push(FencedBlock {
                    lang,
                    body: body.join("\n"),
                });
            }
            Some((_, _, body)) => body.push(line),
        }
    }
    if let Some((_, lang, body)) = open {
        blocks.push(FencedBlock {
            lang,
            body: body.join("\n"),
        });
    }
    blocks
}

/// Wrap `code` in a fence longer than any backtick run inside it.
pub fn fenced(code: &str) -> String {
    let mut longest = 0;
    let mut run = 0;
    for c in code.chars() {
        if c == '`' {
            run += 1;
            longest = longest.max(run);
        } else {
            run = 0;
        }
    }
    let fence = "`".repeat(longest.max(2) + 1);
    format!("{fence}\n{code}\n{fence}")
}

/// Keep the last `max_bytes` of `text`, prefixed with a marker when
/// something was dropped.
pub fn truncate_tail(text: &str, max_bytes: usize) -> Cow<'_, str> {
    if text.len() <= max_bytes {
        return Cow::Borrowed(text);
    }
    let mut cut = text.len() - max_bytes;
    while !text.is_char_boundary(cut) {
        cut += 1;
    }
    Cow::Owned(format!(
        "{}{}",
        truncation_marker(cut),
        &text[cut..]
    ))
}

pub fn truncation_marker(dropped: usize) -> String {
    format!("[... {dropped} earlier bytes truncated ...]\n")
}

/// Strip the whitespace prefix common to all non-blank lines.
pub fn dedent(text: &str) -> String {
    let indent = text
        .split('\n')
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.len() - l.trim_start().len())
        .min()
        .unwrap_or(0);
    text.split('\n')
        .map(|l| l.get(indent..).unwrap_or_else(|| l.trim_start()))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Lowercase, with every run of non-alphanumerics collapsed to `_`.
pub fn normalize_key(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut pending_sep = false;
    for c in s.chars() {
        if c.is_alphanumeric() {
            if pending_sep && !out.is_empty() {
                out.push('_');
            }
            pending_sep = false;
            out.extend(c.to_lowercase());
        } else {
            pending_sep = true;
        }
    }
    out
}
