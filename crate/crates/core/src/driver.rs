//! Single-threaded host for a [`Session`] on a virtual clock.
//!
//! Provider calls are answered at request time and delivered back after the
//! response's latency, so the whole session runs without real waiting. Only
//! providers that finish without an async runtime (scripted, echo) belong
//! here; the gateway hosts sessions against real providers.

use std::collections::BTreeMap;
use std::sync::Arc;

use futures::executor::block_on;

use crate::clock::Millis;
use crate::error::SessionError;
use crate::provider::{Provider, ProviderError, ProviderResponse};
use crate::runner::{RunnerError, ScriptedRunner};
use crate::session::{Completion, Effect, PushFrame, Session};

/// Used when a failed call reports no latency of its own.
pub const FALLBACK_LATENCY_MS: Millis = 1_000;

fn latency(result: &Result<ProviderResponse, ProviderError>) -> Millis {
    match result {
        Ok(r) => r.latency_ms as Millis,
        Err(e) => e.latency_ms().map_or(FALLBACK_LATENCY_MS, |ms| ms as Millis),
    }
}

pub struct VirtualDriver {
    session: Session,
    provider: Arc<dyn Provider>,
    runner: Option<Arc<ScriptedRunner>>,
    /// Keyed by (due time, issue order).
    inflight: BTreeMap<(Millis, u64), Completion>,
    issued: u64,
    frames: Vec<PushFrame>,
    now: Millis,
}

impl VirtualDriver {
    pub fn new(session: Session, provider: Arc<dyn Provider>, runner: Option<Arc<ScriptedRunner>>) -> Self {
        let now = session.created_at();
        let mut driver = Self {
            session,
            provider,
            runner,
            inflight: BTreeMap::new(),
            issued: 0,
            frames: Vec::new(),
            now,
        };
        driver.pump(now);
        driver
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn into_session(self) -> Session {
        self.session
    }

    pub fn now(&self) -> Millis {
        self.now
    }

    /// Push frames emitted so far, in order.
    pub fn frames(&self) -> &[PushFrame] {
        &self.frames
    }

    pub fn take_frames(&mut self) -> Vec<PushFrame> {
        std::mem::take(&mut self.frames)
    }

    pub fn inflight(&self) -> usize {
        self.inflight.len()
    }

    /// Deliver completions and clock ticks up to and including `t`. A
    /// completion due at the same time as a tick goes first.
    pub fn advance_to(&mut self, t: Millis) -> Result<(), SessionError> {
        loop {
            let due = self.inflight.keys().next().map(|k| k.0).filter(|&d| d <= t);
            let tick = Some(self.session.next_tick_at()).filter(|&n| n <= t);
            match (due, tick) {
                (Some(d), tick) if tick.is_none_or(|n| d <= n) => {
                    let (_, completion) = self.inflight.pop_first().expect("non-empty");
                    let ts = d.max(self.now);
                    self.now = ts;
                    self.session.complete(completion, ts)?;
                    self.pump(ts);
                }
                (_, Some(n)) => {
                    self.now = n.max(self.now);
                    self.session.tick(n)?;
                    self.pump(n);
                }
                _ => break,
            }
        }
        self.now = self.now.max(t);
        Ok(())
    }

    /// Advance to `ts`, then run a user operation at `ts`.
    pub fn act<R>(
        &mut self,
        ts: Millis,
        op: impl FnOnce(&mut Session, Millis) -> Result<R, SessionError>,
    ) -> Result<R, SessionError> {
        self.advance_to(ts)?;
        let out = op(&mut self.session, ts);
        self.pump(ts);
        out
    }

    /// Advance until nothing is in flight, but not past `limit`.
    pub fn settle(&mut self, limit: Millis) -> Result<(), SessionError> {
        while let Some(&(due, _)) = self.inflight.keys().next() {
            if due > limit {
                break;
            }
            self.advance_to(due)?;
        }
        Ok(())
    }

    fn schedule(&mut self, due: Millis, completion: Completion) {
        self.issued += 1;
        self.inflight.insert((due, self.issued), completion);
    }

    fn pump(&mut self, ts: Millis) {
        for effect in self.session.take_effects() {
            match effect {
                Effect::Generate { token, prompt } => {
                    let result = block_on(self.provider.complete(&prompt));
                    self.schedule(ts + latency(&result), Completion::Generation { token, result });
                }
                Effect::Chat { request_id, prompt } => {
                    let result = block_on(self.provider.complete(&prompt));
                    self.schedule(ts + latency(&result), Completion::Chat { request_id, result });
                }
                Effect::Preview { preview_id, prompt } => {
                    let result = block_on(self.provider.complete(&prompt));
                    self.schedule(ts + latency(&result), Completion::Preview { preview_id, result });
                }
                Effect::Run { run_id, .. } => {
                    let run = self.runner.as_ref().and_then(|r| r.next_run());
                    match run {
                        Some(run) => self.schedule(
                            ts + run.duration_ms,
                            Completion::Run {
                                run_id,
                                result: Ok(run.result),
                            },
                        ),
                        None => self.schedule(
                            ts,
                            Completion::Run {
                                run_id,
                                result: Err(RunnerError("no scripted runs".into())),
                            },
                        ),
                    }
                }
                Effect::Push(frame) => self.frames.push(frame),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condition::ConditionConfig;
    use crate::provider::{ScriptedProvider, ScriptedResponse};
    use crate::runner::{RunResult, ScriptedRun};
    use crate::session::{FrameKind, SessionInit};
    use crate::suggestion::prompt::PromptKind;
    use crate::telemetry::{EventKind, MemorySink};

    const ONE: &str = "```json\n[{\"type\": \"explain_code\", \"summary\": \"Explaining existing code: x.\", \"explanation\": []}]\n```";

    fn driver(cfg: ConditionConfig, provider: ScriptedProvider) -> (VirtualDriver, Arc<MemorySink>) {
        let sink = Arc::new(MemorySink::default());
        let session = Session::create("session-d".into(), SessionInit::new(cfg), sink.clone(), 0).unwrap();
        (VirtualDriver::new(session, Arc::new(provider), None), sink)
    }

    #[test]
    fn idle_session_gets_periodic_batches() {
        let provider = ScriptedProvider::new();
        for _ in 0..5 {
            provider.push(Some(PromptKind::Standard), ScriptedResponse::text(ONE, 1_000));
        }
        let (mut d, sink) = driver(ConditionConfig::suggest(), provider);
        d.advance_to(60_000).unwrap();
        let shown: Vec<_> = sink
            .events()
            .into_iter()
            .filter(|e| e.kind == EventKind::SuggestionShown)
            .map(|e| e.ts_ms)
            .collect();
        assert_eq!(shown, [6_000, 27_000, 48_000]);
        assert_eq!(
            d.frames().iter().filter(|f| f.frame_kind == FrameKind::SuggestionsBatch).count(),
            3
        );
    }

    #[test]
    fn chat_reply_arrives_after_latency() {
        let provider = ScriptedProvider::new();
        provider.push(Some(PromptKind::Chat), ScriptedResponse::text("sure", 2_500));
        let (mut d, _) = driver(ConditionConfig::baseline(), provider);
        d.act(1_000, |s, ts| s.post_chat("help", ts)).unwrap();
        d.advance_to(3_400).unwrap();
        assert_eq!(d.session().chat().len(), 1);
        d.advance_to(3_500).unwrap();
        assert_eq!(d.session().chat().len(), 2);
    }

    #[test]
    fn missing_runner_reports_error_without_crashing() {
        let (mut d, sink) = driver(ConditionConfig::suggest(), ScriptedProvider::new());
        let doc = d.session().primary_doc().doc_id.clone();
        d.act(100, |s, ts| s.run_code(&doc, ts)).unwrap();
        d.advance_to(200).unwrap();
        let run = sink.events().into_iter().find(|e| e.kind == EventKind::Run).unwrap();
        assert!(run.payload["runner_error"].is_string());
        assert!(d.session().last_run().is_none());
    }

    #[test]
    fn scripted_runs_complete_after_their_duration() {
        let sink = Arc::new(MemorySink::default());
        let session = Session::create(
            "session-d".into(),
            SessionInit::new(ConditionConfig::baseline()),
            sink.clone(),
            0,
        )
        .unwrap();
        let runner = Arc::new(ScriptedRunner::new([ScriptedRun {
            result: RunResult {
                stdout: "ok\n".into(),
                stderr: String::new(),
                exit_status: 0,
                is_error: false,
                timed_out: false,
            },
            duration_ms: 300,
        }]));
        let mut d = VirtualDriver::new(session, Arc::new(ScriptedProvider::new()), Some(runner));
        let doc = d.session().primary_doc().doc_id.clone();
        d.act(1_000, |s, ts| s.run_code(&doc, ts)).unwrap();
        d.settle(10_000).unwrap();
        let run = sink.events().into_iter().find(|e| e.kind == EventKind::Run).unwrap();
        assert_eq!(run.ts_ms, 1_300);
        assert_eq!(run.payload["stdout"], "ok\n");
    }
}
