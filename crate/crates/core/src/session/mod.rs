//! Per-session state and every operation on it.
//!
//! A [`Session`] is a synchronous state machine. Operations take an explicit
//! timestamp, update state, append telemetry, and queue [`Effect`]s: model
//! calls, code runs and push frames. Whoever hosts the session performs the
//! calls and feeds the results back through [`Session::complete`].
//!
//! Clock ticks sit on a one-second grid from `created_at`. Every operation
//! first processes the ticks it has passed: user operations include the tick
//! at their own timestamp, completions stop just before it.

pub mod types;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use types::{ChatMessage, ChatRole, CodeDocument};

use crate::clock::{Millis, TICK_MS};
use crate::condition::ConditionConfig;
use crate::error::SessionError;
use crate::ids::{BatchId, ChatRequestId, DocId, IdSequence, PreviewId, RunId, SessionId, SuggestionId};
use crate::preview::{extract_proposed_code, PreviewError, PreviewResult};
use crate::provider::{ProviderError, ProviderResponse};
use crate::runner::{RunResult, RunnerError};
use crate::suggestion::parse::{parse_suggestions_with, ParsedBatch};
use crate::suggestion::prompt::{
    build_chat_prompt, build_debug_prompt, build_preview_prompt, build_standard_prompt, PromptBundle,
};
use crate::suggestion::{Suggestion, SuggestionCategory, SuggestionOrigin, SuggestionState};
use crate::telemetry::{EventKind, EventSink, SessionLog};
use crate::text::fenced;
use crate::timing::{
    on_event, on_manual_request, ActivityEvent, ActivityKind, Decision, DiscardReason, GenerationKind,
    ManualRequestError, Mode, TimingState,
};

/// What a new session starts from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInit {
    pub condition: ConditionConfig,
    #[serde(default)]
    pub task_id: Option<String>,
    #[serde(default)]
    pub starter_code: String,
    #[serde(default)]
    pub participant_id: Option<String>,
}

impl SessionInit {
    pub fn new(condition: ConditionConfig) -> Self {
        Self {
            condition,
            task_id: None,
            starter_code: String::new(),
            participant_id: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameKind {
    SuggestionsBatch,
    ChatMessage,
    PreviewReady,
    RunOutput,
    Notice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PushFrame {
    pub seq: u64,
    pub frame_kind: FrameKind,
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    Generate { token: u64, prompt: PromptBundle },
    Chat { request_id: ChatRequestId, prompt: PromptBundle },
    Preview { preview_id: PreviewId, prompt: PromptBundle },
    Run { run_id: RunId, code: String },
    Push(PushFrame),
}

/// An asynchronous result re-entering the session.
#[derive(Debug, Clone, PartialEq)]
pub enum Completion {
    Generation {
        token: u64,
        result: Result<ProviderResponse, ProviderError>,
    },
    Chat {
        request_id: ChatRequestId,
        result: Result<ProviderResponse, ProviderError>,
    },
    Preview {
        preview_id: PreviewId,
        result: Result<ProviderResponse, ProviderError>,
    },
    Run {
        run_id: RunId,
        result: Result<RunResult, RunnerError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct GenerationRequest {
    kind: GenerationKind,
    manual: bool,
    requested_ts: Millis,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct RunRequest {
    doc_id: DocId,
    doc_version: u64,
    requested_ts: Millis,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum PreviewSlot {
    Pending { suggestion_id: SuggestionId, doc_id: DocId, original_text: String },
    Ready(PreviewResult),
    Resolved,
}

/// Read-only view for clients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionSnapshot {
    pub session_id: SessionId,
    pub condition: ConditionConfig,
    pub created_at: Millis,
    pub task_id: Option<String>,
    pub documents: Vec<CodeDocument>,
    pub chat: Vec<ChatMessage>,
    /// The current batch, including accepted and deleted cards.
    pub suggestions: Vec<Suggestion>,
    pub last_run: Option<RunResult>,
    pub mode: Mode,
    pub generation_pending: bool,
    pub read_only: bool,
}

#[derive(Debug, Default)]
struct Ids {
    doc: IdSequence,
    suggestion: IdSequence,
    batch: IdSequence,
    preview: IdSequence,
    chat: IdSequence,
    run: IdSequence,
}

#[derive(Debug)]
pub struct Session {
    session_id: SessionId,
    condition: ConditionConfig,
    created_at: Millis,
    documents: Vec<CodeDocument>,
    chat: Vec<ChatMessage>,
    suggestions: Vec<Suggestion>,
    /// Cards from earlier batches, still reachable for copy and preview.
    archive: BTreeMap<SuggestionId, Suggestion>,
    current_batch: Option<BatchId>,
    last_run: Option<RunResult>,
    timing: TimingState,
    next_tick: Millis,
    generations: BTreeMap<u64, GenerationRequest>,
    chats: BTreeMap<ChatRequestId, Millis>,
    runs: BTreeMap<RunId, RunRequest>,
    previews: BTreeMap<PreviewId, PreviewSlot>,
    ids: Ids,
    log: SessionLog,
    outbox: Vec<Effect>,
    frame_seq: u64,
}

fn unsupported(operation: &'static str, cfg: &ConditionConfig) -> SessionError {
    SessionError::Unsupported {
        operation,
        condition: cfg.name.clone(),
    }
}

fn response_payload(resp: &ProviderResponse) -> Value {
    let mut v = json!({
        "provider": resp.provider_name,
        "latency_ms": resp.latency_ms,
        "raw_text": resp.raw_text,
    });
    if let Some(b) = &resp.request_body {
        v["request_body"] = json!(b);
    }
    if let Some(b) = &resp.response_body {
        v["response_body"] = json!(b);
    }
    v
}

fn error_payload(err: &ProviderError) -> Value {
    let mut v = json!({ "message": err.to_string() });
    if let Some(ms) = err.latency_ms() {
        v["latency_ms"] = json!(ms);
    }
    v
}

fn card_json(s: &Suggestion) -> Value {
    serde_json::to_value(s).expect("suggestions serialize")
}

impl Session {
    pub fn create(
        session_id: SessionId,
        init: SessionInit,
        sink: std::sync::Arc<dyn EventSink>,
        ts: Millis,
    ) -> Result<Self, SessionError> {
        init.condition.validate()?;
        let mut log = SessionLog::new(session_id.clone(), init.condition.name.clone(), sink);
        log.set_task(init.task_id.clone());
        let mut ids = Ids::default();
        let doc = CodeDocument {
            doc_id: DocId::numbered(ids.doc.bump()),
            text: init.starter_code.clone(),
            version: 1,
        };
        let mut session = Self {
            session_id,
            condition: init.condition.clone(),
            created_at: ts,
            documents: vec![doc.clone()],
            chat: Vec::new(),
            suggestions: Vec::new(),
            archive: BTreeMap::new(),
            current_batch: None,
            last_run: None,
            timing: TimingState::started_at(ts),
            next_tick: ts + TICK_MS,
            generations: BTreeMap::new(),
            chats: BTreeMap::new(),
            runs: BTreeMap::new(),
            previews: BTreeMap::new(),
            ids,
            log,
            outbox: Vec::new(),
            frame_seq: 0,
        };
        session.log.emit(
            ts,
            EventKind::SessionCreated,
            json!({
                "condition": init.condition,
                "task_id": init.task_id,
                "participant_id": init.participant_id,
                "doc_id": doc.doc_id,
            }),
        )?;
        session.log_code_update(&doc, "initial", ts)?;
        if let Some(task_id) = &init.task_id {
            session
                .log
                .emit(ts, EventKind::TaskStart, json!({ "task_id": task_id }))?;
        }
        Ok(session)
    }

    // ---- accessors

    pub fn session_id(&self) -> &SessionId {
        &self.session_id
    }

    pub fn condition(&self) -> &ConditionConfig {
        &self.condition
    }

    pub fn created_at(&self) -> Millis {
        self.created_at
    }

    pub fn documents(&self) -> &[CodeDocument] {
        &self.documents
    }

    pub fn primary_doc(&self) -> &CodeDocument {
        &self.documents[0]
    }

    pub fn chat(&self) -> &[ChatMessage] {
        &self.chat
    }

    pub fn suggestions(&self) -> &[Suggestion] {
        &self.suggestions
    }

    /// Cards the user can still act on.
    pub fn visible_suggestions(&self) -> impl Iterator<Item = &Suggestion> {
        self.suggestions.iter().filter(|s| !s.state.is_terminal())
    }

    pub fn last_run(&self) -> Option<&RunResult> {
        self.last_run.as_ref()
    }

    pub fn timing(&self) -> &TimingState {
        &self.timing
    }

    pub fn preview(&self, id: &PreviewId) -> Option<&PreviewResult> {
        match self.previews.get(id) {
            Some(PreviewSlot::Ready(p)) => Some(p),
            _ => None,
        }
    }

    pub fn is_read_only(&self) -> bool {
        self.log.failure().is_some()
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        let last = self.timing.last_event_ts.unwrap_or(self.created_at);
        SessionSnapshot {
            session_id: self.session_id.clone(),
            condition: self.condition.clone(),
            created_at: self.created_at,
            task_id: self.log.task_id().map(str::to_string),
            documents: self.documents.clone(),
            chat: self.chat.clone(),
            suggestions: self.suggestions.clone(),
            last_run: self.last_run.clone(),
            mode: crate::timing::classify_mode(&self.timing, &self.condition, last),
            generation_pending: self.timing.pending_generation.is_some(),
            read_only: self.is_read_only(),
        }
    }

    /// Effects queued since the last call.
    pub fn take_effects(&mut self) -> Vec<Effect> {
        std::mem::take(&mut self.outbox)
    }

    /// A notice frame describing the current suggestion list, for clients
    /// that (re)connect to the push channel.
    pub fn state_notice(&mut self) -> PushFrame {
        self.frame_seq += 1;
        PushFrame {
            seq: self.frame_seq,
            frame_kind: FrameKind::Notice,
            payload: json!({
                "level": "info",
                "message": "connected",
                "batch_id": self.current_batch,
                "suggestions": self.suggestions,
                "generation_pending": self.timing.pending_generation.is_some(),
            }),
        }
    }

    // ---- clock

    fn catch_up(&mut self, upto: Millis) -> Result<(), SessionError> {
        while self.next_tick <= upto {
            let ts = self.next_tick;
            self.next_tick += TICK_MS;
            self.timing_event(ActivityKind::ClockTick, ts)?;
        }
        Ok(())
    }

    /// Process clock ticks up to and including `ts`.
    pub fn tick(&mut self, ts: Millis) -> Result<(), SessionError> {
        self.log.check_writable()?;
        self.catch_up(ts)
    }

    /// Timestamp of the next clock tick.
    pub fn next_tick_at(&self) -> Millis {
        self.next_tick
    }

    fn begin_input(&mut self, ts: Millis) -> Result<(), SessionError> {
        self.log.check_writable()?;
        self.check_order(ts)?;
        self.catch_up(ts)
    }

    fn check_order(&self, ts: Millis) -> Result<(), SessionError> {
        match self.timing.last_event_ts {
            Some(last) if ts < last => Err(crate::error::OutOfOrder {
                event_ts: ts,
                state_ts: last,
            }
            .into()),
            _ => Ok(()),
        }
    }

    fn timing_event(&mut self, kind: ActivityKind, ts: Millis) -> Result<Decision, SessionError> {
        let (state, decision) = on_event(&self.timing, &self.condition, ActivityEvent::new(kind, ts))?;
        self.timing = state;
        if let Decision::StartGeneration { kind, token } = decision {
            self.start_generation(kind, token, false, ts);
        }
        Ok(decision)
    }

    fn start_generation(&mut self, kind: GenerationKind, token: u64, manual: bool, ts: Millis) {
        let code = &self.primary_doc().text;
        let prompt = match kind {
            GenerationKind::Standard => build_standard_prompt(&self.chat, code, &self.condition),
            GenerationKind::Debug => {
                let run = self.last_run.as_ref().expect("debug generations follow a failed run");
                build_debug_prompt(&self.chat, code, &self.condition, run)
                    .expect("debug generations follow a failed run")
            }
        };
        self.generations.insert(
            token,
            GenerationRequest {
                kind,
                manual,
                requested_ts: ts,
            },
        );
        self.outbox.push(Effect::Generate { token, prompt });
    }

    fn push(&mut self, frame_kind: FrameKind, payload: Value) {
        self.frame_seq += 1;
        self.outbox.push(Effect::Push(PushFrame {
            seq: self.frame_seq,
            frame_kind,
            payload,
        }));
    }

    fn notice(&mut self, level: &str, message: String) {
        self.push(FrameKind::Notice, json!({ "level": level, "message": message }));
    }

    fn log_code_update(&mut self, doc: &CodeDocument, source: &str, ts: Millis) -> Result<(), SessionError> {
        self.log.emit(
            ts,
            EventKind::CodeUpdate,
            json!({
                "doc_id": doc.doc_id,
                "version": doc.version,
                "text": doc.text,
                "source": source,
            }),
        )?;
        Ok(())
    }

    fn doc_index(&self, doc_id: &DocId) -> Result<usize, SessionError> {
        self.documents
            .iter()
            .position(|d| &d.doc_id == doc_id)
            .ok_or_else(|| SessionError::not_found("document", doc_id.as_str()))
    }

    fn replace_text(&mut self, idx: usize, text: String, source: &str, ts: Millis) -> Result<u64, SessionError> {
        let doc = &mut self.documents[idx];
        doc.text = text;
        doc.version += 1;
        let doc = doc.clone();
        self.log_code_update(&doc, source, ts)?;
        Ok(doc.version)
    }

    // ---- code

    /// Replace the document text. Identical text still makes a new version.
    pub fn apply_edit(&mut self, doc_id: &DocId, text: impl Into<String>, ts: Millis) -> Result<u64, SessionError> {
        let idx = self.doc_index(doc_id)?;
        self.begin_input(ts)?;
        let version = self.replace_text(idx, text.into(), "user", ts)?;
        self.timing_event(ActivityKind::UserTyping, ts)?;
        Ok(version)
    }

    // ---- chat

    /// Typing in the chat box. Holds back suggestions like editing does.
    pub fn chat_typing(&mut self, ts: Millis) -> Result<(), SessionError> {
        self.begin_input(ts)?;
        self.log.emit(ts, EventKind::ChatTyping, json!({}))?;
        self.timing_event(ActivityKind::ChatTyping, ts)?;
        Ok(())
    }

    pub fn post_chat(&mut self, content: &str, ts: Millis) -> Result<ChatRequestId, SessionError> {
        if content.trim().is_empty() {
            return Err(SessionError::Validation("chat message is empty".into()));
        }
        self.begin_input(ts)?;
        let request_id = ChatRequestId::numbered(self.ids.chat.bump());
        let msg = ChatMessage::new(ChatRole::User, content, ts);
        self.chat.push(msg.clone());
        self.log.emit(
            ts,
            EventKind::ChatSend,
            json!({ "request_id": request_id, "content": content }),
        )?;
        self.push(
            FrameKind::ChatMessage,
            json!({ "request_id": request_id, "message": msg }),
        );
        self.timing_event(ActivityKind::ChatSend, ts)?;
        let prompt = build_chat_prompt(&self.chat, &self.primary_doc().text, &self.condition);
        self.chats.insert(request_id.clone(), ts);
        self.outbox.push(Effect::Chat {
            request_id: request_id.clone(),
            prompt,
        });
        Ok(request_id)
    }

    /// Empty the chat history. Live suggestion cards go with it.
    pub fn clear_chat(&mut self, ts: Millis) -> Result<(), SessionError> {
        self.begin_input(ts)?;
        let cleared = self.delete_live();
        let messages = self.chat.len();
        self.chat.clear();
        self.log.emit(
            ts,
            EventKind::ChatClear,
            json!({ "messages": messages, "suggestion_ids": cleared }),
        )?;
        self.timing_event(ActivityKind::SuggestionInteraction, ts)?;
        Ok(())
    }

    fn complete_chat(
        &mut self,
        request_id: ChatRequestId,
        result: Result<ProviderResponse, ProviderError>,
        ts: Millis,
    ) -> Result<(), SessionError> {
        if !self.chats.contains_key(&request_id) {
            return Err(SessionError::not_found("chat request", request_id.as_str()));
        }
        self.chats.remove(&request_id);
        let msg = match result {
            Ok(resp) => {
                let msg = ChatMessage::new(ChatRole::Assistant, resp.raw_text.clone(), ts);
                let mut payload = response_payload(&resp);
                payload["request_id"] = json!(request_id);
                self.chat.push(msg.clone());
                self.log.emit(ts, EventKind::ChatResponse, payload)?;
                msg
            }
            Err(err) => {
                let msg = ChatMessage::new(
                    ChatRole::Assistant,
                    format!("Sorry, the assistant is unavailable right now ({err})."),
                    ts,
                );
                let mut payload = error_payload(&err);
                payload["target"] = json!("chat");
                payload["request_id"] = json!(request_id);
                self.chat.push(msg.clone());
                self.log.emit(ts, EventKind::ProviderError, payload)?;
                msg
            }
        };
        self.push(
            FrameKind::ChatMessage,
            json!({ "request_id": request_id, "message": msg }),
        );
        self.timing_event(ActivityKind::ChatResponseArrived, ts)?;
        Ok(())
    }

    // ---- suggestions

    /// The explicit "Suggest" request.
    pub fn request_suggestions(&mut self, ts: Millis) -> Result<(), SessionError> {
        if !self.condition.proactive_enabled {
            return Err(unsupported("suggestions/request", &self.condition));
        }
        self.begin_input(ts)?;
        let (state, decision) = on_manual_request(&self.timing, &self.condition, ts).map_err(|e| match e {
            ManualRequestError::Unsupported(_) => unsupported("suggestions/request", &self.condition),
            ManualRequestError::OutOfOrder(o) => o.into(),
        })?;
        self.timing = state;
        let Decision::StartGeneration { kind, token } = decision else {
            unreachable!("manual requests always start a generation");
        };
        self.log
            .emit(ts, EventKind::SuggestionRequest, json!({ "token": token }))?;
        self.start_generation(kind, token, true, ts);
        Ok(())
    }

    fn complete_generation(
        &mut self,
        token: u64,
        result: Result<ProviderResponse, ProviderError>,
        ts: Millis,
    ) -> Result<(), SessionError> {
        let req = self
            .generations
            .remove(&token)
            .ok_or_else(|| SessionError::not_found("generation", token.to_string()))?;
        let generation = match req.kind {
            GenerationKind::Standard => "standard",
            GenerationKind::Debug => "debug",
        };
        let base = json!({
            "token": token,
            "generation": generation,
            "manual": req.manual,
            "requested_ts": req.requested_ts,
        });
        let merge = |mut extra: Value| {
            for (k, v) in base.as_object().expect("object") {
                extra[k] = v.clone();
            }
            extra
        };

        let resp = match result {
            Ok(resp) => resp,
            Err(err) => {
                let mut payload = merge(error_payload(&err));
                payload["target"] = json!("suggestions");
                self.log.emit(ts, EventKind::ProviderError, payload)?;
                self.timing_event(ActivityKind::GenerationCompleted { token, success: false }, ts)?;
                return Ok(());
            }
        };

        let allowed: &[SuggestionCategory] = match req.kind {
            GenerationKind::Standard => &SuggestionCategory::ALL,
            GenerationKind::Debug => &SuggestionCategory::DEBUG,
        };
        let parsed = match parse_suggestions_with(&resp.raw_text, self.condition.suggestions_per_batch, allowed) {
            Ok(p) => p,
            Err(failure) => {
                let mut payload = merge(response_payload(&resp));
                payload["target"] = json!("suggestions");
                payload["warnings"] = json!(failure.warnings());
                self.log.emit(ts, EventKind::ParseFailure, payload)?;
                self.timing_event(ActivityKind::GenerationCompleted { token, success: false }, ts)?;
                return Ok(());
            }
        };

        let mut payload = merge(response_payload(&resp));
        payload["categories"] = json!(parsed.suggestions.iter().map(|s| s.category).collect::<Vec<_>>());
        payload["warnings"] = json!(parsed.warnings);
        self.log.emit(ts, EventKind::SuggestionsGenerated, payload)?;

        let (state, decision) = on_event(
            &self.timing,
            &self.condition,
            ActivityEvent::new(ActivityKind::GenerationCompleted { token, success: true }, ts),
        )?;
        self.timing = state;
        match decision {
            Decision::DisplayBatch { .. } => {
                let origin = match (req.kind, req.manual) {
                    (GenerationKind::Debug, _) => SuggestionOrigin::ProactiveDebug,
                    (_, true) => SuggestionOrigin::ManualRequest,
                    _ => SuggestionOrigin::ProactiveStandard,
                };
                self.display_batch(token, origin, parsed, ts)
            }
            Decision::DiscardBatch { reason, .. } => {
                let reason = match reason {
                    DiscardReason::Stale => "stale",
                    DiscardReason::Busy => "busy",
                };
                self.log.emit(
                    ts,
                    EventKind::GenerationDiscarded,
                    json!({ "token": token, "reason": reason }),
                )?;
                Ok(())
            }
            Decision::None | Decision::StartGeneration { .. } => Ok(()),
        }
    }

    fn display_batch(
        &mut self,
        token: u64,
        origin: SuggestionOrigin,
        parsed: ParsedBatch,
        ts: Millis,
    ) -> Result<(), SessionError> {
        let batch_id = BatchId::numbered(self.ids.batch.bump());
        let cards: Vec<Suggestion> = parsed
            .suggestions
            .into_iter()
            .map(|p| Suggestion {
                suggestion_id: SuggestionId::numbered(self.ids.suggestion.bump()),
                category: p.category,
                summary: p.summary,
                code: p.code,
                explanation: p.explanation,
                origin,
                state: SuggestionState::Collapsed,
                batch_id: batch_id.clone(),
            })
            .collect();
        for old in std::mem::replace(&mut self.suggestions, cards) {
            self.archive.insert(old.suggestion_id.clone(), old);
        }
        self.current_batch = Some(batch_id.clone());
        let payload = json!({
            "batch_id": batch_id,
            "token": token,
            "origin": origin,
            "suggestions": self.suggestions.iter().map(card_json).collect::<Vec<_>>(),
        });
        self.log.emit(ts, EventKind::SuggestionShown, payload.clone())?;
        self.push(FrameKind::SuggestionsBatch, payload);
        Ok(())
    }

    fn live_index(&self, id: &SuggestionId) -> Result<usize, SessionError> {
        self.suggestions
            .iter()
            .position(|s| &s.suggestion_id == id)
            .ok_or_else(|| SessionError::not_found("suggestion", id.as_str()))
    }

    fn any_suggestion(&self, id: &SuggestionId) -> Result<&Suggestion, SessionError> {
        self.suggestions
            .iter()
            .find(|s| &s.suggestion_id == id)
            .or_else(|| self.archive.get(id))
            .ok_or_else(|| SessionError::not_found("suggestion", id.as_str()))
    }

    fn bad_transition(s: &Suggestion, to: SuggestionState) -> SessionError {
        SessionError::BadState(format!(
            "suggestion `{}` is {:?}, cannot become {:?}",
            s.suggestion_id, s.state, to
        ))
    }

    fn suggestion_payload(s: &Suggestion) -> Value {
        json!({
            "suggestion_id": s.suggestion_id,
            "category": s.category,
            "batch_id": s.batch_id,
        })
    }

    /// Returns false when the card was already expanded.
    pub fn expand_suggestion(&mut self, id: &SuggestionId, ts: Millis) -> Result<bool, SessionError> {
        let idx = self.live_index(id)?;
        match self.suggestions[idx].state {
            SuggestionState::Expanded => return Ok(false),
            SuggestionState::Collapsed => {}
            _ => return Err(Self::bad_transition(&self.suggestions[idx], SuggestionState::Expanded)),
        }
        self.begin_input(ts)?;
        self.suggestions[idx].state = SuggestionState::Expanded;
        let payload = Self::suggestion_payload(&self.suggestions[idx]);
        self.log.emit(ts, EventKind::SuggestionExpand, payload)?;
        self.timing_event(ActivityKind::SuggestionInteraction, ts)?;
        Ok(true)
    }

    /// Returns false when the card was already collapsed. Collapsing is not
    /// an interaction for timing purposes.
    pub fn collapse_suggestion(&mut self, id: &SuggestionId, ts: Millis) -> Result<bool, SessionError> {
        let idx = self.live_index(id)?;
        match self.suggestions[idx].state {
            SuggestionState::Collapsed => return Ok(false),
            SuggestionState::Expanded => {}
            _ => return Err(Self::bad_transition(&self.suggestions[idx], SuggestionState::Collapsed)),
        }
        self.begin_input(ts)?;
        self.suggestions[idx].state = SuggestionState::Collapsed;
        let payload = Self::suggestion_payload(&self.suggestions[idx]);
        self.log.emit(ts, EventKind::SuggestionCollapse, payload)?;
        Ok(true)
    }

    /// Move an expanded card into the chat, on the user's side.
    pub fn accept_suggestion(&mut self, id: &SuggestionId, ts: Millis) -> Result<(), SessionError> {
        let idx = self.live_index(id)?;
        if self.suggestions[idx].state != SuggestionState::Expanded {
            return Err(Self::bad_transition(&self.suggestions[idx], SuggestionState::Accepted));
        }
        self.begin_input(ts)?;
        let s = &mut self.suggestions[idx];
        s.state = SuggestionState::Accepted;
        let mut content = s.summary.clone();
        if let Some(code) = &s.code {
            content.push_str("\n\n");
            content.push_str(&fenced(code));
        }
        if !s.explanation.is_empty() {
            content.push('\n');
            for b in &s.explanation {
                content.push_str(&format!("\n- {b}"));
            }
        }
        let mut msg = ChatMessage::new(ChatRole::AcceptedSuggestion, content, ts);
        msg.suggestion_id = Some(s.suggestion_id.clone());
        let payload = Self::suggestion_payload(s);
        self.chat.push(msg.clone());
        self.log.emit(ts, EventKind::SuggestionAccept, payload)?;
        self.push(FrameKind::ChatMessage, json!({ "message": msg }));
        self.timing_event(ActivityKind::SuggestionInteraction, ts)?;
        Ok(())
    }

    /// Delete an expanded card. Deleting a deleted card is a no-op and
    /// returns false.
    pub fn delete_suggestion(&mut self, id: &SuggestionId, ts: Millis) -> Result<bool, SessionError> {
        let idx = self.live_index(id)?;
        match self.suggestions[idx].state {
            SuggestionState::Deleted => return Ok(false),
            SuggestionState::Expanded => {}
            _ => return Err(Self::bad_transition(&self.suggestions[idx], SuggestionState::Deleted)),
        }
        self.begin_input(ts)?;
        self.suggestions[idx].state = SuggestionState::Deleted;
        let payload = Self::suggestion_payload(&self.suggestions[idx]);
        self.log.emit(ts, EventKind::SuggestionDelete, payload)?;
        self.timing_event(ActivityKind::SuggestionInteraction, ts)?;
        Ok(true)
    }

    fn delete_live(&mut self) -> Vec<SuggestionId> {
        let mut ids = Vec::new();
        for s in &mut self.suggestions {
            if !s.state.is_terminal() {
                s.state = SuggestionState::Deleted;
                ids.push(s.suggestion_id.clone());
            }
        }
        ids
    }

    /// Delete every live card. Logged even when there is nothing to clear.
    pub fn clear_suggestions(&mut self, ts: Millis) -> Result<Vec<SuggestionId>, SessionError> {
        self.begin_input(ts)?;
        let ids = self.delete_live();
        self.log.emit(
            ts,
            EventKind::SuggestionsClear,
            json!({ "suggestion_ids": ids, "count": ids.len() }),
        )?;
        self.timing_event(ActivityKind::SuggestionInteraction, ts)?;
        Ok(ids)
    }

    /// Record that the client copied a card's code.
    pub fn copy_suggestion(&mut self, id: &SuggestionId, ts: Millis) -> Result<(), SessionError> {
        let s = self.any_suggestion(id)?;
        if s.state == SuggestionState::Deleted {
            return Err(SessionError::BadState(format!("suggestion `{id}` was deleted")));
        }
        let payload = Self::suggestion_payload(s);
        self.begin_input(ts)?;
        self.log.emit(ts, EventKind::SuggestionCopy, payload)?;
        self.timing_event(ActivityKind::SuggestionInteraction, ts)?;
        Ok(())
    }

    // ---- preview

    /// Ask the model to integrate a card into the current code. Accepted
    /// cards, and cards from earlier batches, can still be previewed.
    pub fn request_preview(&mut self, id: &SuggestionId, ts: Millis) -> Result<PreviewId, SessionError> {
        if !self.condition.preview_enabled {
            return Err(unsupported("preview", &self.condition));
        }
        let s = self.any_suggestion(id)?.clone();
        if s.state == SuggestionState::Deleted {
            return Err(SessionError::BadState(format!("suggestion `{id}` was deleted")));
        }
        self.begin_input(ts)?;
        let preview_id = PreviewId::numbered(self.ids.preview.bump());
        let doc = self.primary_doc().clone();
        let prompt = build_preview_prompt(&doc.text, &s);
        self.previews.insert(
            preview_id.clone(),
            PreviewSlot::Pending {
                suggestion_id: s.suggestion_id.clone(),
                doc_id: doc.doc_id.clone(),
                original_text: doc.text.clone(),
            },
        );
        let mut payload = Self::suggestion_payload(&s);
        payload["preview_id"] = json!(preview_id);
        payload["doc_version"] = json!(doc.version);
        self.log.emit(ts, EventKind::SuggestionPreview, payload)?;
        self.timing_event(ActivityKind::SuggestionInteraction, ts)?;
        self.outbox.push(Effect::Preview {
            preview_id: preview_id.clone(),
            prompt,
        });
        Ok(preview_id)
    }

    fn complete_preview(
        &mut self,
        preview_id: PreviewId,
        result: Result<ProviderResponse, ProviderError>,
        ts: Millis,
    ) -> Result<(), SessionError> {
        let Some(PreviewSlot::Pending {
            suggestion_id,
            doc_id,
            original_text,
        }) = self.previews.get(&preview_id).cloned()
        else {
            return Err(SessionError::not_found("pending preview", preview_id.as_str()));
        };
        let resp = match result {
            Ok(r) => r,
            Err(err) => {
                self.previews.insert(preview_id.clone(), PreviewSlot::Resolved);
                let mut payload = error_payload(&err);
                payload["target"] = json!("preview");
                payload["preview_id"] = json!(preview_id);
                self.log.emit(ts, EventKind::ProviderError, payload)?;
                self.notice("error", format!("preview {preview_id} failed: {err}"));
                return Ok(());
            }
        };
        let Some(proposed) = extract_proposed_code(&resp.raw_text, &original_text) else {
            self.previews.insert(preview_id.clone(), PreviewSlot::Resolved);
            let mut payload = response_payload(&resp);
            payload["target"] = json!("preview");
            payload["preview_id"] = json!(preview_id);
            self.log.emit(ts, EventKind::ParseFailure, payload)?;
            self.notice("error", format!("preview {preview_id} failed: {}", PreviewError::NoCode));
            return Ok(());
        };
        let result = PreviewResult::new(
            preview_id.clone(),
            suggestion_id,
            doc_id,
            original_text,
            proposed,
            resp.latency_ms,
        );
        let mut payload = response_payload(&resp);
        payload["preview_id"] = json!(preview_id);
        payload["suggestion_id"] = json!(result.suggestion_id);
        payload["hunks"] = json!(result.hunks.len());
        self.log.emit(ts, EventKind::PreviewReady, payload)?;
        self.push(
            FrameKind::PreviewReady,
            serde_json::to_value(&result).expect("previews serialize"),
        );
        self.previews.insert(preview_id, PreviewSlot::Ready(result));
        Ok(())
    }

    fn ready_preview(&self, id: &PreviewId) -> Result<&PreviewResult, SessionError> {
        match self.previews.get(id) {
            Some(PreviewSlot::Ready(p)) => Ok(p),
            Some(PreviewSlot::Pending { .. }) => Err(SessionError::BadState(format!("preview `{id}` is not ready yet"))),
            Some(PreviewSlot::Resolved) => Err(SessionError::BadState(format!("preview `{id}` was already closed"))),
            None => Err(SessionError::not_found("preview", id.as_str())),
        }
    }

    /// Merge a preview into its document: the selected hunks (all when
    /// `None`), or `final_text` when the user edited the proposal.
    pub fn accept_preview(
        &mut self,
        id: &PreviewId,
        selected: Option<&[usize]>,
        final_text: Option<String>,
        ts: Millis,
    ) -> Result<u64, SessionError> {
        let preview = self.ready_preview(id)?.clone();
        let idx = self.doc_index(&preview.doc_id)?;
        let current = &self.documents[idx].text;
        if !preview.is_fresh(current) {
            return Err(SessionError::StalePreview(id.to_string()));
        }
        let merged = match &final_text {
            Some(text) => text.clone(),
            None => preview.merge(current, selected).map_err(|e| match e {
                PreviewError::Stale => SessionError::StalePreview(id.to_string()),
                other => SessionError::Validation(other.to_string()),
            })?,
        };
        let selected_hunks: Vec<usize> = match (selected, &final_text) {
            (_, Some(_)) | (None, None) => (0..preview.hunks.len()).collect(),
            (Some(sel), None) => {
                let mut v = sel.to_vec();
                v.sort_unstable();
                v.dedup();
                v
            }
        };
        self.begin_input(ts)?;
        self.previews.insert(id.clone(), PreviewSlot::Resolved);
        let mut payload = json!({
            "preview_id": id,
            "suggestion_id": preview.suggestion_id,
            "selected_hunks": selected_hunks,
            "hunk_count": selected_hunks.len(),
            "total_hunks": preview.hunks.len(),
        });
        if let Some(text) = &final_text {
            payload["final_text"] = json!(text);
        }
        self.log.emit(ts, EventKind::PreviewAccept, payload)?;
        let version = self.replace_text(idx, merged, "preview", ts)?;
        self.timing_event(ActivityKind::UserTyping, ts)?;
        Ok(version)
    }

    pub fn hide_preview(&mut self, id: &PreviewId, ts: Millis) -> Result<(), SessionError> {
        let suggestion_id = self.ready_preview(id)?.suggestion_id.clone();
        self.begin_input(ts)?;
        self.previews.insert(id.clone(), PreviewSlot::Resolved);
        self.log.emit(
            ts,
            EventKind::PreviewHide,
            json!({ "preview_id": id, "suggestion_id": suggestion_id }),
        )?;
        self.timing_event(ActivityKind::SuggestionInteraction, ts)?;
        Ok(())
    }

    // ---- runs

    /// Queue a run of the document's current text. Nothing is logged and
    /// timing is untouched until the result arrives.
    pub fn run_code(&mut self, doc_id: &DocId, ts: Millis) -> Result<RunId, SessionError> {
        let idx = self.doc_index(doc_id)?;
        self.log.check_writable()?;
        let run_id = RunId::numbered(self.ids.run.bump());
        let doc = &self.documents[idx];
        self.runs.insert(
            run_id.clone(),
            RunRequest {
                doc_id: doc.doc_id.clone(),
                doc_version: doc.version,
                requested_ts: ts,
            },
        );
        self.outbox.push(Effect::Run {
            run_id: run_id.clone(),
            code: doc.text.clone(),
        });
        Ok(run_id)
    }

    fn complete_run(
        &mut self,
        run_id: RunId,
        result: Result<RunResult, RunnerError>,
        ts: Millis,
    ) -> Result<(), SessionError> {
        let req = self
            .runs
            .remove(&run_id)
            .ok_or_else(|| SessionError::not_found("run", run_id.as_str()))?;
        let base = json!({
            "run_id": run_id,
            "doc_id": req.doc_id,
            "doc_version": req.doc_version,
            "requested_ts": req.requested_ts,
        });
        match result {
            Ok(run) => {
                let mut payload = base;
                payload["stdout"] = json!(run.stdout);
                payload["stderr"] = json!(run.stderr);
                payload["exit_status"] = json!(run.exit_status);
                payload["is_error"] = json!(run.is_error);
                payload["timed_out"] = json!(run.timed_out);
                self.last_run = Some(run.clone());
                self.log.emit(ts, EventKind::Run, payload)?;
                self.push(
                    FrameKind::RunOutput,
                    json!({ "run_id": run_id, "result": run }),
                );
                self.timing_event(ActivityKind::RunCompleted { is_error: run.is_error }, ts)?;
            }
            Err(err) => {
                let mut payload = base;
                payload["runner_error"] = json!(err.0);
                self.log.emit(ts, EventKind::Run, payload)?;
                self.push(
                    FrameKind::RunOutput,
                    json!({ "run_id": run_id, "error": err.0 }),
                );
            }
        }
        Ok(())
    }

    // ---- tasks

    /// Begin a task. With `starter_code` the document is reset to it.
    pub fn start_task(&mut self, task_id: &str, starter_code: Option<&str>, ts: Millis) -> Result<(), SessionError> {
        self.begin_input(ts)?;
        self.log.set_task(Some(task_id.to_string()));
        self.log
            .emit(ts, EventKind::TaskStart, json!({ "task_id": task_id }))?;
        if let Some(code) = starter_code {
            self.replace_text(0, code.to_string(), "task", ts)?;
        }
        Ok(())
    }

    pub fn submit_task(&mut self, ts: Millis) -> Result<(), SessionError> {
        let Some(task_id) = self.log.task_id().map(str::to_string) else {
            return Err(SessionError::BadState("no task in progress".into()));
        };
        self.begin_input(ts)?;
        let doc = self.primary_doc().clone();
        self.log.emit(
            ts,
            EventKind::TaskSubmit,
            json!({
                "task_id": task_id,
                "doc_id": doc.doc_id,
                "doc_version": doc.version,
            }),
        )?;
        Ok(())
    }

    // ---- completions

    pub fn complete(&mut self, completion: Completion, ts: Millis) -> Result<(), SessionError> {
        self.log.check_writable()?;
        self.check_order(ts)?;
        self.catch_up(ts - 1)?;
        match completion {
            Completion::Generation { token, result } => self.complete_generation(token, result, ts),
            Completion::Chat { request_id, result } => self.complete_chat(request_id, result, ts),
            Completion::Preview { preview_id, result } => self.complete_preview(preview_id, result, ts),
            Completion::Run { run_id, result } => self.complete_run(run_id, result, ts),
        }
    }
}
