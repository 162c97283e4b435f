//! Runs code through an external command in a scratch directory.
//!
//! There is no sandboxing beyond the wall-clock limit and output caps. Point
//! the command template at a container or jail if untrusted code may run.

use std::path::Path;
use std::process::Stdio;
use std::time::Duration;

use async_trait::async_trait;
use tokio::io::{AsyncRead, AsyncReadExt};
use tokio::process::Command;

use proactive_core::runner::{CodeRunner, ErrorPattern, RunResult, RunnerError};

use crate::config::RunnerConfig;

const TRUNCATION_NOTE: &str = "\n[output truncated]\n";

#[derive(Debug, Clone)]
pub struct CommandRunner {
    command: Vec<String>,
    file_name: String,
    timeout: Duration,
    output_cap: usize,
    pattern: ErrorPattern,
}

impl CommandRunner {
    pub fn new(cfg: &RunnerConfig) -> Result<Self, RunnerError> {
        if cfg.command.is_empty() {
            return Err(RunnerError("runner command is empty".into()));
        }
        if !(cfg.timeout_s > 0.0 && cfg.timeout_s.is_finite()) {
            return Err(RunnerError(format!("bad runner timeout {}", cfg.timeout_s)));
        }
        let pattern = ErrorPattern::new(&cfg.error_pattern).map_err(|e| RunnerError(e.to_string()))?;
        Ok(Self {
            command: cfg.command.clone(),
            file_name: cfg.file_name.clone(),
            timeout: Duration::from_secs_f64(cfg.timeout_s),
            output_cap: cfg.output_cap_bytes,
            pattern,
        })
    }

    fn build(&self, dir: &Path, file: &Path) -> Command {
        let expand = |arg: &String| {
            arg.replace("{file}", &file.to_string_lossy())
                .replace("{dir}", &dir.to_string_lossy())
        };
        let mut cmd = Command::new(expand(&self.command[0]));
        cmd.args(self.command[1..].iter().map(expand))
            .current_dir(dir)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .kill_on_drop(true);
        cmd
    }
}

/// Read everything, keeping at most `cap` bytes.
async fn read_capped<R: AsyncRead + Unpin>(mut r: R, cap: usize) -> (Vec<u8>, bool) {
    let mut kept = Vec::new();
    let mut truncated = false;
    let mut buf = [0u8; 8192];
    loop {
        match r.read(&mut buf).await {
            Ok(0) | Err(_) => break,
            Ok(n) => {
                let room = cap.saturating_sub(kept.len());
                if n > room {
                    truncated = true;
                }
                kept.extend_from_slice(&buf[..n.min(room)]);
            }
        }
    }
    (kept, truncated)
}

fn text(bytes: Vec<u8>, truncated: bool) -> String {
    let mut s = String::from_utf8_lossy(&bytes).into_owned();
    if truncated {
        s.push_str(TRUNCATION_NOTE);
    }
    s
}

#[async_trait]
impl CodeRunner for CommandRunner {
    async fn run(&self, code: &str) -> Result<RunResult, RunnerError> {
        let dir = tempfile::tempdir().map_err(|e| RunnerError(format!("scratch dir: {e}")))?;
        let file = dir.path().join(&self.file_name);
        tokio::fs::write(&file, code)
            .await
            .map_err(|e| RunnerError(format!("write {}: {e}", file.display())))?;

        let mut child = self
            .build(dir.path(), &file)
            .spawn()
            .map_err(|e| RunnerError(format!("spawn `{}`: {e}", self.command[0])))?;
        let stdout = tokio::spawn(read_capped(child.stdout.take().expect("piped"), self.output_cap));
        let stderr = tokio::spawn(read_capped(child.stderr.take().expect("piped"), self.output_cap));

        let status = tokio::time::timeout(self.timeout, child.wait()).await;
        let timed_out = status.is_err();
        if timed_out {
            let _ = child.kill().await;
        }
        let (out, out_cut) = stdout.await.unwrap_or_default();
        let (err, err_cut) = stderr.await.unwrap_or_default();
        let (stdout, stderr) = (text(out, out_cut), text(err, err_cut));

        match status {
            Err(_) => Ok(RunResult::timeout(stdout, stderr, self.timeout.as_secs_f64())),
            Ok(Err(e)) => Err(RunnerError(format!("wait: {e}"))),
            Ok(Ok(status)) => {
                // killed by a signal: report it as a failure
                let code = status.code().unwrap_or(-1);
                Ok(RunResult::classify(stdout, stderr, code, &self.pattern))
            }
        }
    }
}
