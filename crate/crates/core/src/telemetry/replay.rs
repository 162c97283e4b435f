//! Rebuild a session from its log and check that it logs the same thing.
//!
//! User inputs are read back from their events. Model replies come either
//! from the log itself ([`ReplaySource::Recorded`], injected at their logged
//! times) or from a provider driven on a virtual clock
//! ([`ReplaySource::Provider`]). Runs always use the logged results. Events
//! the session derives on its own (snapshots after a preview, displayed
//! batches, discards) are not inputs; they must reappear by themselves.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::Value;
use thiserror::Error;

use super::{EventKind, LogContents, MemorySink, TelemetryEvent};
use crate::clock::Millis;
use crate::condition::ConditionConfig;
use crate::driver::VirtualDriver;
use crate::error::SessionError;
use crate::ids::{ChatRequestId, DocId, PreviewId, RunId, SessionId, SuggestionId};
use crate::provider::{Provider, ProviderError, ProviderResponse};
use crate::runner::{RunResult, RunnerError, ScriptedRun, ScriptedRunner};
use crate::session::{Completion, Session, SessionInit};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("log contains no sessions")]
    Empty,
    #[error("log contains several sessions ({0}); pick one")]
    Ambiguous(String),
    #[error("session `{0}` is not in the log")]
    UnknownSession(String),
    #[error("event {seq}: {reason}")]
    Malformed { seq: u64, reason: String },
    #[error("event {seq}: replayed operation failed: {source}")]
    Session {
        seq: u64,
        #[source]
        source: SessionError,
    },
}

pub enum ReplaySource {
    Recorded,
    Provider(Arc<dyn Provider>),
}

#[derive(Debug, Clone)]
pub struct ReplayReport {
    pub session_id: String,
    /// Original and replayed events as log lines, with the replayed
    /// session id rewritten to the original one.
    pub original: Vec<String>,
    pub replayed: Vec<String>,
}

impl ReplayReport {
    pub fn identical(&self) -> bool {
        self.original == self.replayed
    }

    /// Index of the first differing line, if any.
    pub fn first_divergence(&self) -> Option<usize> {
        let n = self.original.len().max(self.replayed.len());
        (0..n).find(|&i| self.original.get(i) != self.replayed.get(i))
    }
}

/// Events of one session. With `session_id` unset the log must hold exactly
/// one session.
pub fn select_session(log: &LogContents, session_id: Option<&str>) -> Result<Vec<TelemetryEvent>, ReplayError> {
    let mut by_session: BTreeMap<&str, Vec<TelemetryEvent>> = BTreeMap::new();
    for ev in &log.events {
        by_session.entry(ev.session_id.as_str()).or_default().push(ev.clone());
    }
    let mut events = match session_id {
        Some(id) => by_session
            .remove(id)
            .ok_or_else(|| ReplayError::UnknownSession(id.to_string()))?,
        None => match by_session.len() {
            0 => return Err(ReplayError::Empty),
            1 => by_session.into_values().next().expect("one session"),
            _ => {
                let ids: Vec<_> = by_session.keys().copied().collect();
                return Err(ReplayError::Ambiguous(ids.join(", ")));
            }
        },
    };
    events.sort_by_key(|e| e.seq);
    Ok(events)
}

enum Action {
    Edit { doc_id: DocId, text: String },
    ChatTyping,
    Chat { content: String },
    ClearChat,
    Request,
    Expand(SuggestionId),
    Collapse(SuggestionId),
    Accept(SuggestionId),
    Delete(SuggestionId),
    Clear,
    Copy(SuggestionId),
    Preview(SuggestionId),
    AcceptPreview { preview_id: PreviewId, selected: Vec<usize>, final_text: Option<String> },
    HidePreview(PreviewId),
    StartTask { task_id: String, starter: Option<String> },
    SubmitTask,
    RunCode { doc_id: DocId },
    Complete(Completion),
}

struct Step {
    seq: u64,
    ts: Millis,
    action: Action,
}

fn malformed(ev: &TelemetryEvent, reason: impl Into<String>) -> ReplayError {
    ReplayError::Malformed {
        seq: ev.seq,
        reason: reason.into(),
    }
}

fn str_field(ev: &TelemetryEvent, key: &str) -> Result<String, ReplayError> {
    ev.payload
        .get(key)
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| malformed(ev, format!("missing string field `{key}`")))
}

fn opt_str(ev: &TelemetryEvent, key: &str) -> Option<String> {
    ev.payload.get(key).and_then(Value::as_str).map(str::to_string)
}

fn u64_field(ev: &TelemetryEvent, key: &str) -> Result<u64, ReplayError> {
    ev.payload
        .get(key)
        .and_then(Value::as_u64)
        .ok_or_else(|| malformed(ev, format!("missing integer field `{key}`")))
}

fn response(ev: &TelemetryEvent) -> Result<ProviderResponse, ProviderError> {
    let mut resp = ProviderResponse::new(
        opt_str(ev, "provider").unwrap_or_default(),
        opt_str(ev, "raw_text").unwrap_or_default(),
        ev.payload.get("latency_ms").and_then(Value::as_u64).unwrap_or(0),
    );
    resp.request_body = opt_str(ev, "request_body");
    resp.response_body = opt_str(ev, "response_body");
    Ok(resp)
}

fn failure(ev: &TelemetryEvent) -> Result<ProviderResponse, ProviderError> {
    Err(ProviderError::Recorded {
        message: opt_str(ev, "message").unwrap_or_default(),
        latency_ms: ev.payload.get("latency_ms").and_then(Value::as_u64),
    })
}

fn completion(ev: &TelemetryEvent) -> Result<Option<Completion>, ReplayError> {
    let target = opt_str(ev, "target");
    let c = match (ev.kind, target.as_deref()) {
        (EventKind::SuggestionsGenerated, _) | (EventKind::ParseFailure, Some("suggestions")) => {
            Completion::Generation {
                token: u64_field(ev, "token")?,
                result: response(ev),
            }
        }
        (EventKind::ProviderError, Some("suggestions")) => Completion::Generation {
            token: u64_field(ev, "token")?,
            result: failure(ev),
        },
        (EventKind::ChatResponse, _) => Completion::Chat {
            request_id: ChatRequestId(str_field(ev, "request_id")?),
            result: response(ev),
        },
        (EventKind::ProviderError, Some("chat")) => Completion::Chat {
            request_id: ChatRequestId(str_field(ev, "request_id")?),
            result: failure(ev),
        },
        (EventKind::PreviewReady, _) | (EventKind::ParseFailure, Some("preview")) => Completion::Preview {
            preview_id: PreviewId(str_field(ev, "preview_id")?),
            result: response(ev),
        },
        (EventKind::ProviderError, Some("preview")) => Completion::Preview {
            preview_id: PreviewId(str_field(ev, "preview_id")?),
            result: failure(ev),
        },
        (EventKind::Run, _) => Completion::Run {
            run_id: RunId(str_field(ev, "run_id")?),
            result: run_result(ev)?,
        },
        (EventKind::ProviderError | EventKind::ParseFailure, _) => {
            return Err(malformed(ev, "unknown failure target"));
        }
        _ => return Ok(None),
    };
    Ok(Some(c))
}

fn run_result(ev: &TelemetryEvent) -> Result<Result<RunResult, RunnerError>, ReplayError> {
    if let Some(msg) = opt_str(ev, "runner_error") {
        return Ok(Err(RunnerError(msg)));
    }
    Ok(Ok(RunResult {
        stdout: str_field(ev, "stdout")?,
        stderr: str_field(ev, "stderr")?,
        exit_status: ev
            .payload
            .get("exit_status")
            .and_then(Value::as_i64)
            .ok_or_else(|| malformed(ev, "missing exit_status"))? as i32,
        is_error: ev.payload.get("is_error").and_then(Value::as_bool).unwrap_or(false),
        timed_out: ev.payload.get("timed_out").and_then(Value::as_bool).unwrap_or(false),
    }))
}

fn sid(ev: &TelemetryEvent) -> Result<SuggestionId, ReplayError> {
    str_field(ev, "suggestion_id").map(SuggestionId)
}

struct Plan {
    session_id: SessionId,
    init: SessionInit,
    created_at: Millis,
    steps: Vec<Step>,
    /// Logged run results in request order, with their durations.
    runs: Vec<(Millis, RunId, Millis, Result<RunResult, RunnerError>)>,
}

fn plan(events: &[TelemetryEvent]) -> Result<Plan, ReplayError> {
    let first = events.first().ok_or(ReplayError::Empty)?;
    if first.kind != EventKind::SessionCreated {
        return Err(malformed(first, "log does not start with session_created"));
    }
    let condition: ConditionConfig = serde_json::from_value(first.payload["condition"].clone())
        .map_err(|e| malformed(first, format!("bad condition: {e}")))?;
    let task_id = opt_str(first, "task_id");
    let initial = events
        .get(1)
        .filter(|e| e.kind == EventKind::CodeUpdate)
        .ok_or_else(|| malformed(first, "missing initial code snapshot"))?;
    let init = SessionInit {
        condition,
        task_id: task_id.clone(),
        starter_code: str_field(initial, "text")?,
        participant_id: opt_str(first, "participant_id"),
    };
    // creation logs session_created, the snapshot and maybe task_start
    let skip = if task_id.is_some() { 3 } else { 2 };

    let mut steps = Vec::new();
    let mut runs = Vec::new();
    // (doc_id, version) -> seq of its snapshot
    let mut snapshots: BTreeMap<(String, u64), (u64, Millis)> = BTreeMap::new();
    for ev in events {
        if ev.kind == EventKind::CodeUpdate {
            snapshots.insert((str_field(ev, "doc_id")?, u64_field(ev, "version")?), (ev.seq, ev.ts_ms));
        }
    }

    for (i, ev) in events.iter().enumerate().skip(skip) {
        let action = match ev.kind {
            EventKind::CodeUpdate => match str_field(ev, "source")?.as_str() {
                "user" => Action::Edit {
                    doc_id: DocId(str_field(ev, "doc_id")?),
                    text: str_field(ev, "text")?,
                },
                _ => continue,
            },
            EventKind::ChatTyping => Action::ChatTyping,
            EventKind::ChatSend => Action::Chat {
                content: str_field(ev, "content")?,
            },
            EventKind::ChatClear => Action::ClearChat,
            EventKind::SuggestionRequest => Action::Request,
            EventKind::SuggestionExpand => Action::Expand(sid(ev)?),
            EventKind::SuggestionCollapse => Action::Collapse(sid(ev)?),
            EventKind::SuggestionAccept => Action::Accept(sid(ev)?),
            EventKind::SuggestionDelete => Action::Delete(sid(ev)?),
            EventKind::SuggestionsClear => Action::Clear,
            EventKind::SuggestionCopy => Action::Copy(sid(ev)?),
            EventKind::SuggestionPreview => Action::Preview(sid(ev)?),
            EventKind::PreviewAccept => Action::AcceptPreview {
                preview_id: PreviewId(str_field(ev, "preview_id")?),
                selected: serde_json::from_value(ev.payload["selected_hunks"].clone())
                    .map_err(|e| malformed(ev, format!("bad selected_hunks: {e}")))?,
                final_text: opt_str(ev, "final_text"),
            },
            EventKind::PreviewHide => Action::HidePreview(PreviewId(str_field(ev, "preview_id")?)),
            EventKind::TaskStart => {
                let starter = events
                    .get(i + 1)
                    .filter(|n| n.kind == EventKind::CodeUpdate && opt_str(n, "source").as_deref() == Some("task"))
                    .map(|n| str_field(n, "text"))
                    .transpose()?;
                Action::StartTask {
                    task_id: str_field(ev, "task_id")?,
                    starter,
                }
            }
            EventKind::TaskSubmit => Action::SubmitTask,
            EventKind::Run => {
                let doc_id = str_field(ev, "doc_id")?;
                let version = u64_field(ev, "doc_version")?;
                let requested_ts = ev
                    .payload
                    .get("requested_ts")
                    .and_then(Value::as_i64)
                    .ok_or_else(|| malformed(ev, "missing requested_ts"))?;
                // issue the request after the snapshot it ran and after
                // everything logged strictly before it
                let (snap_seq, _) = snapshots
                    .get(&(doc_id.clone(), version))
                    .copied()
                    .ok_or_else(|| malformed(ev, "run refers to an unlogged document version"))?;
                let before = events
                    .iter()
                    .take_while(|e| e.ts_ms < requested_ts)
                    .map(|e| e.seq)
                    .last()
                    .unwrap_or(0);
                steps.push(Step {
                    seq: snap_seq.max(before),
                    ts: requested_ts,
                    action: Action::RunCode { doc_id: DocId(doc_id) },
                });
                let run_id = RunId(str_field(ev, "run_id")?);
                runs.push((requested_ts, run_id, ev.ts_ms - requested_ts, run_result(ev)?));
                Action::Complete(completion(ev)?.expect("runs are completions"))
            }
            _ => match completion(ev)? {
                Some(c) => Action::Complete(c),
                None => continue,
            },
        };
        steps.push(Step {
            seq: ev.seq,
            ts: ev.ts_ms,
            action,
        });
    }
    // a run request goes right after the event it follows
    steps.sort_by_key(|s| (s.seq, matches!(s.action, Action::RunCode { .. })));
    runs.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));

    Ok(Plan {
        session_id: first.session_id.clone(),
        init,
        created_at: first.ts_ms,
        steps,
        runs,
    })
}

fn apply(session: &mut Session, action: Action, ts: Millis) -> Result<(), SessionError> {
    match action {
        Action::Edit { doc_id, text } => session.apply_edit(&doc_id, text, ts).map(drop),
        Action::ChatTyping => session.chat_typing(ts),
        Action::Chat { content } => session.post_chat(&content, ts).map(drop),
        Action::ClearChat => session.clear_chat(ts),
        Action::Request => session.request_suggestions(ts),
        Action::Expand(id) => session.expand_suggestion(&id, ts).map(drop),
        Action::Collapse(id) => session.collapse_suggestion(&id, ts).map(drop),
        Action::Accept(id) => session.accept_suggestion(&id, ts),
        Action::Delete(id) => session.delete_suggestion(&id, ts).map(drop),
        Action::Clear => session.clear_suggestions(ts).map(drop),
        Action::Copy(id) => session.copy_suggestion(&id, ts),
        Action::Preview(id) => session.request_preview(&id, ts).map(drop),
        Action::AcceptPreview {
            preview_id,
            selected,
            final_text,
        } => session
            .accept_preview(&preview_id, Some(&selected), final_text, ts)
            .map(drop),
        Action::HidePreview(id) => session.hide_preview(&id, ts),
        Action::StartTask { task_id, starter } => session.start_task(&task_id, starter.as_deref(), ts),
        Action::SubmitTask => session.submit_task(ts),
        Action::RunCode { doc_id } => session.run_code(&doc_id, ts).map(drop),
        Action::Complete(c) => session.complete(c, ts),
    }
}

fn lines(events: &[TelemetryEvent], session_id: &SessionId) -> Vec<String> {
    events
        .iter()
        .map(|e| {
            let mut e = e.clone();
            e.session_id = session_id.clone();
            e.to_line()
        })
        .collect()
}

/// Replay one session's events and return both logs for comparison.
pub fn replay_session(events: &[TelemetryEvent], source: ReplaySource) -> Result<ReplayReport, ReplayError> {
    let plan = plan(events)?;
    let last_ts = events.last().map_or(plan.created_at, |e| e.ts_ms);
    let sink = Arc::new(MemorySink::default());
    let replay_id = SessionId(format!("replay-{}", plan.session_id));
    let session = Session::create(replay_id, plan.init, sink.clone(), plan.created_at)
        .map_err(|source| ReplayError::Session { seq: 1, source })?;

    match source {
        ReplaySource::Recorded => {
            let mut session = session;
            for step in plan.steps {
                apply(&mut session, step.action, step.ts).map_err(|source| ReplayError::Session { seq: step.seq, source })?;
                session.take_effects();
            }
        }
        ReplaySource::Provider(provider) => {
            let runner = ScriptedRunner::new(plan.runs.into_iter().filter_map(|(_, _, duration_ms, r)| {
                r.ok().map(|result| ScriptedRun { result, duration_ms })
            }));
            let mut driver = VirtualDriver::new(session, provider, Some(Arc::new(runner)));
            for step in plan.steps {
                if matches!(step.action, Action::Complete(_)) {
                    continue;
                }
                driver
                    .act(step.ts, |s, ts| apply(s, step.action, ts))
                    .map_err(|source| ReplayError::Session { seq: step.seq, source })?;
            }
            driver
                .advance_to(last_ts)
                .map_err(|source| ReplayError::Session { seq: 0, source })?;
        }
    }

    Ok(ReplayReport {
        session_id: plan.session_id.to_string(),
        original: lines(events, &plan.session_id),
        replayed: lines(&sink.events(), &plan.session_id),
    })
}
