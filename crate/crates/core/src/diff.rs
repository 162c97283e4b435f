//! Line-level diff and partial patch application.
//!
//! Text is split on `\n` and rebuilt with `\n`, so a trailing newline shows
//! up as a final empty line and survives a round trip. The empty string has
//! no lines at all.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One contiguous change. Positions are 1-based. A pure insertion
/// (`old_len == 0`) goes before old line `old_start`; a pure deletion
/// (`new_len == 0`) sits before new line `new_start`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DiffHunk {
    pub old_start: usize,
    pub old_len: usize,
    pub new_start: usize,
    pub new_len: usize,
    #[serde(rename = "removed")]
    pub removed_lines: Vec<String>,
    #[serde(rename = "added")]
    pub added_lines: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ApplyError {
    #[error("hunks must be sorted by old_start and must not overlap (hunk {0})")]
    Overlap(usize),
    #[error("hunk {index} does not match the original at line {line}")]
    Mismatch { index: usize, line: usize },
    #[error("hunk {0} reaches past the end of the original")]
    OutOfRange(usize),
}

pub fn split_lines(text: &str) -> Vec<&str> {
    if text.is_empty() {
        Vec::new()
    } else {
        text.split('\n').collect()
    }
}

fn join_lines<S: AsRef<str>>(lines: &[S]) -> String {
    let mut out = String::new();
    for (i, l) in lines.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(l.as_ref());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Equal,
    Delete,
    Insert,
}

/// Edit script over `a` and `b` from a longest common subsequence.
fn edit_script(a: &[&str], b: &[&str]) -> Vec<Op> {
    let prefix = a.iter().zip(b).take_while(|(x, y)| x == y).count();
    let suffix = a[prefix..]
        .iter()
        .rev()
        .zip(b[prefix..].iter().rev())
        .take_while(|(x, y)| x == y)
        .count();
    let am = &a[prefix..a.len() - suffix];
    let bm = &b[prefix..b.len() - suffix];
    let (n, m) = (am.len(), bm.len());

    // lcs[i][j] = LCS length of am[i..] and bm[j..]
    let w = m + 1;
    let mut lcs = vec![0u32; (n + 1) * w];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[i * w + j] = if am[i] == bm[j] {
                lcs[(i + 1) * w + j + 1] + 1
            } else {
                lcs[(i + 1) * w + j].max(lcs[i * w + j + 1])
            };
        }
    }

    let mut ops = vec![Op::Equal; prefix];
    let (mut i, mut j) = (0, 0);
    while i < n || j < m {
        if i < n && j < m && am[i] == bm[j] {
            ops.push(Op::Equal);
            i += 1;
            j += 1;
        } else if j == m || (i < n && lcs[(i + 1) * w + j] >= lcs[i * w + j + 1]) {
            ops.push(Op::Delete);
            i += 1;
        } else {
            ops.push(Op::Insert);
            j += 1;
        }
    }
    ops.extend(std::iter::repeat_n(Op::Equal, suffix));
    ops
}

/// Minimal line diff: the removed lines number `len(a) - LCS(a, b)`.
pub fn compute_diff(original: &str, proposed: &str) -> Vec<DiffHunk> {
    let a = split_lines(original);
    let b = split_lines(proposed);
    let ops = edit_script(&a, &b);

    let mut hunks = Vec::new();
    let (mut i, mut j) = (0, 0);
    let mut k = 0;
    while k < ops.len() {
        if ops[k] == Op::Equal {
            i += 1;
            j += 1;
            k += 1;
            continue;
        }
        let mut hunk = DiffHunk {
            old_start: i + 1,
            old_len: 0,
            new_start: j + 1,
            new_len: 0,
            removed_lines: Vec::new(),
            added_lines: Vec::new(),
        };
        while k < ops.len() && ops[k] != Op::Equal {
            match ops[k] {
                Op::Delete => {
                    hunk.removed_lines.push(a[i].to_string());
                    i += 1;
                }
                Op::Insert => {
                    hunk.added_lines.push(b[j].to_string());
                    j += 1;
                }
                Op::Equal => unreachable!(),
            }
            k += 1;
        }
        hunk.old_len = hunk.removed_lines.len();
        hunk.new_len = hunk.added_lines.len();
        hunks.push(hunk);
    }
    hunks
}

/// Apply `hunks` (any subset of a diff against `original`, in order).
/// Lines outside the hunks' old ranges are left alone.
pub fn apply_hunks(original: &str, hunks: &[DiffHunk]) -> Result<String, ApplyError> {
    let a = split_lines(original);
    let mut out: Vec<&str> = Vec::with_capacity(a.len());
    let mut cursor = 0; // 0-based index of the next unconsumed original line
    for (index, h) in hunks.iter().enumerate() {
        let start = h.old_start.checked_sub(1).ok_or(ApplyError::Overlap(index))?;
        if start < cursor {
            return Err(ApplyError::Overlap(index));
        }
        if start + h.old_len > a.len() || h.old_len != h.removed_lines.len() {
            return Err(ApplyError::OutOfRange(index));
        }
        for (off, expected) in h.removed_lines.iter().enumerate() {
            if a[start + off] != expected {
                return Err(ApplyError::Mismatch {
                    index,
                    line: start + off + 1,
                });
            }
        }
        out.extend_from_slice(&a[cursor..start]);
        out.extend(h.added_lines.iter().map(String::as_str));
        cursor = start + h.old_len;
    }
    out.extend_from_slice(&a[cursor..]);
    Ok(join_lines(&out))
}
