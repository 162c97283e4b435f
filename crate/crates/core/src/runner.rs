//! Code-run results and the runner abstraction. The process-spawning runner
//! lives in the gateway; this crate only needs something that turns code
//! into a [`RunResult`].

use std::collections::VecDeque;
use std::sync::Mutex;

use async_trait::async_trait;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::clock::Millis;

/// Default pattern for error output that counts as a failed run even when
/// the exit status is zero.
pub const DEFAULT_ERROR_PATTERN: &str =
    r"(?m)^Traceback \(most recent call last\):|^\w*(Error|Exception):";

pub const TIMEOUT_MARKER: &str = "[run timed out]";

#[derive(Debug, Clone)]
pub struct ErrorPattern(Regex);

impl ErrorPattern {
    pub fn new(pattern: &str) -> Result<Self, regex::Error> {
        Regex::new(pattern).map(Self)
    }

    pub fn is_match(&self, stderr: &str) -> bool {
        self.0.is_match(stderr)
    }
}

impl Default for ErrorPattern {
    fn default() -> Self {
        Self::new(DEFAULT_ERROR_PATTERN).expect("default error pattern compiles")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunResult {
    pub stdout: String,
    pub stderr: String,
    pub exit_status: i32,
    pub is_error: bool,
    #[serde(default)]
    pub timed_out: bool,
}

impl RunResult {
    /// `is_error` holds iff the exit status is non-zero or stderr matches
    /// the error pattern.
    pub fn classify(
        stdout: impl Into<String>,
        stderr: impl Into<String>,
        exit_status: i32,
        pattern: &ErrorPattern,
    ) -> Self {
        let stdout = stdout.into();
        let stderr = stderr.into();
        let is_error = exit_status != 0 || pattern.is_match(&stderr);
        Self {
            stdout,
            stderr,
            exit_status,
            is_error,
            timed_out: false,
        }
    }

    pub fn timeout(stdout: impl Into<String>, stderr: impl Into<String>, limit_s: f64) -> Self {
        let mut stderr = stderr.into();
        if !stderr.is_empty() && !stderr.ends_with('\n') {
            stderr.push('\n');
        }
        stderr.push_str(&format!("{TIMEOUT_MARKER} wall-clock limit of {limit_s}s exceeded\n"));
        Self {
            stdout: stdout.into(),
            stderr,
            exit_status: -1,
            is_error: true,
            timed_out: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("runner failure: {0}")]
pub struct RunnerError(pub String);

#[async_trait]
pub trait CodeRunner: Send + Sync {
    async fn run(&self, code: &str) -> Result<RunResult, RunnerError>;
}

/// A scripted run outcome and how long the run takes in virtual time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptedRun {
    pub result: RunResult,
    pub duration_ms: Millis,
}

/// Replays canned results in order; repeats the last one when exhausted.
#[derive(Debug, Default)]
pub struct ScriptedRunner {
    queue: Mutex<VecDeque<ScriptedRun>>,
    last: Mutex<Option<ScriptedRun>>,
}

impl ScriptedRunner {
    pub fn new(runs: impl IntoIterator<Item = ScriptedRun>) -> Self {
        Self {
            queue: Mutex::new(runs.into_iter().collect()),
            last: Mutex::new(None),
        }
    }

    pub fn next_run(&self) -> Option<ScriptedRun> {
        let next = self.queue.lock().expect("runner queue").pop_front();
        let mut last = self.last.lock().expect("runner last");
        match next {
            Some(run) => {
                *last = Some(run.clone());
                Some(run)
            }
            None => last.clone(),
        }
    }
}

#[async_trait]
impl CodeRunner for ScriptedRunner {
    async fn run(&self, _code: &str) -> Result<RunResult, RunnerError> {
        self.next_run()
            .map(|r| r.result)
            .ok_or_else(|| RunnerError("no scripted runs".into()))
    }
}
