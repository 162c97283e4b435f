//! When to ask for suggestions, and whether a finished batch may be shown.
//!
//! [`on_event`] is a pure function of `(state, config, event)`. The hosting
//! session owns the only mutable [`TimingState`] and feeds it every activity
//! in arrival order, including a `clock_tick` once per second.

pub mod sim;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Millis;
use crate::condition::ConditionConfig;
use crate::error::OutOfOrder;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Writing code or chatting: suggestions are held back.
    Acceleration,
    /// Idle, presumably planning: suggestions become eligible.
    Exploration,
    /// Last run failed and the code has not changed since.
    Debugging,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationKind {
    Standard,
    Debug,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingGeneration {
    pub token: u64,
    pub kind: GenerationKind,
    pub requested_ts: Millis,
    pub manual: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingState {
    pub mode: Mode,
    pub last_activity_ts: Option<Millis>,
    /// Last suggestion display, suggestion interaction, or chat.
    pub last_relevant_ts: Option<Millis>,
    pub last_typing_ts: Option<Millis>,
    pub typing_active: bool,
    pub awaiting_chat_reply: bool,
    /// The latest run errored and no edit happened since.
    pub run_error_unedited: bool,
    pub generation_token: u64,
    pub pending_generation: Option<PendingGeneration>,
    pub last_event_ts: Option<Millis>,
}

impl Default for TimingState {
    fn default() -> Self {
        Self {
            mode: Mode::Exploration,
            last_activity_ts: None,
            last_relevant_ts: None,
            last_typing_ts: None,
            typing_active: false,
            awaiting_chat_reply: false,
            run_error_unedited: false,
            generation_token: 0,
            pending_generation: None,
            last_event_ts: None,
        }
    }
}

impl TimingState {
    /// State for a session opened at `ts`; opening counts as activity.
    pub fn started_at(ts: Millis) -> Self {
        Self {
            mode: Mode::Acceleration,
            last_activity_ts: Some(ts),
            last_event_ts: Some(ts),
            ..Self::default()
        }
    }

    fn invalidate_pending(&mut self) {
        self.generation_token += 1;
        self.pending_generation = None;
    }

    fn start(&mut self, kind: GenerationKind, ts: Millis, manual: bool) -> Decision {
        self.generation_token += 1;
        let token = self.generation_token;
        self.pending_generation = Some(PendingGeneration {
            token,
            kind,
            requested_ts: ts,
            manual,
        });
        Decision::StartGeneration { kind, token }
    }

    fn busy(&self) -> bool {
        self.typing_active || self.awaiting_chat_reply
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ActivityKind {
    UserTyping,
    ChatTyping,
    ChatSend,
    ChatResponseArrived,
    SuggestionInteraction,
    RunCompleted { is_error: bool },
    ManualRequest,
    ClockTick,
    /// A requested generation finished; `success` is false on provider or
    /// parse failure.
    GenerationCompleted { token: u64, success: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityEvent {
    pub kind: ActivityKind,
    pub ts: Millis,
}

impl ActivityEvent {
    pub fn new(kind: ActivityKind, ts: Millis) -> Self {
        Self { kind, ts }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscardReason {
    /// The token was superseded while the generation was in flight.
    Stale,
    /// The user was typing or waiting on a chat reply when it arrived.
    Busy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "decision")]
pub enum Decision {
    None,
    StartGeneration { kind: GenerationKind, token: u64 },
    DisplayBatch { token: u64 },
    DiscardBatch { token: u64, reason: DiscardReason },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ManualRequestError {
    #[error("manual suggestion requests are unavailable in condition `{0}`")]
    Unsupported(String),
    #[error(transparent)]
    OutOfOrder(#[from] OutOfOrder),
}

pub fn classify_mode(state: &TimingState, cfg: &ConditionConfig, now: Millis) -> Mode {
    if state.run_error_unedited {
        return Mode::Debugging;
    }
    let recently_active = state
        .last_activity_ts
        .is_some_and(|t| now - t < cfg.idle_threshold_ms());
    if state.busy() || recently_active {
        Mode::Acceleration
    } else {
        Mode::Exploration
    }
}

/// Advance the timing state by one event.
pub fn on_event(
    state: &TimingState,
    cfg: &ConditionConfig,
    ev: ActivityEvent,
) -> Result<(TimingState, Decision), OutOfOrder> {
    if let Some(last) = state.last_event_ts {
        if ev.ts < last {
            return Err(OutOfOrder {
                event_ts: ev.ts,
                state_ts: last,
            });
        }
    }
    let ts = ev.ts;
    let mut s = state.clone();
    s.last_event_ts = Some(ts);

    let decision = match ev.kind {
        ActivityKind::UserTyping => {
            s.typing_active = true;
            s.last_typing_ts = Some(ts);
            s.last_activity_ts = Some(ts);
            s.run_error_unedited = false;
            s.invalidate_pending();
            Decision::None
        }
        ActivityKind::ChatTyping => {
            s.typing_active = true;
            s.last_typing_ts = Some(ts);
            s.last_activity_ts = Some(ts);
            s.invalidate_pending();
            Decision::None
        }
        ActivityKind::ChatSend => {
            s.awaiting_chat_reply = true;
            s.typing_active = false;
            s.last_activity_ts = Some(ts);
            s.last_relevant_ts = Some(ts);
            s.invalidate_pending();
            Decision::None
        }
        ActivityKind::ChatResponseArrived => {
            s.awaiting_chat_reply = false;
            s.last_relevant_ts = Some(ts);
            Decision::None
        }
        ActivityKind::SuggestionInteraction => {
            s.last_activity_ts = Some(ts);
            s.last_relevant_ts = Some(ts);
            Decision::None
        }
        ActivityKind::RunCompleted { is_error } => {
            // pressing Run ends any typing burst
            s.typing_active = false;
            s.last_activity_ts = Some(ts);
            s.run_error_unedited = is_error;
            if is_error && cfg.proactive_enabled {
                s.last_relevant_ts = Some(ts);
                s.start(GenerationKind::Debug, ts, false)
            } else {
                Decision::None
            }
        }
        ActivityKind::ManualRequest => {
            s.last_activity_ts = Some(ts);
            if cfg.proactive_enabled {
                s.typing_active = false;
                s.last_relevant_ts = Some(ts);
                s.start(GenerationKind::Standard, ts, true)
            } else {
                Decision::None
            }
        }
        ActivityKind::ClockTick => {
            if s.typing_active
                && s
                    .last_typing_ts
                    .is_none_or(|t| ts - t >= cfg.typing_resume_grace_ms())
            {
                s.typing_active = false;
            }
            let idle = s
                .last_activity_ts
                .is_none_or(|t| ts - t >= cfg.idle_threshold_ms());
            let cooled = s
                .last_relevant_ts
                .is_none_or(|t| ts - t >= cfg.cooldown_ms());
            if cfg.proactive_enabled
                && s.pending_generation.is_none()
                && !s.busy()
                && idle
                && cooled
            {
                s.start(GenerationKind::Standard, ts, false)
            } else {
                Decision::None
            }
        }
        ActivityKind::GenerationCompleted { token, success } => {
            if !cfg.proactive_enabled {
                Decision::None
            } else if token != s.generation_token
                || s.pending_generation.map(|p| p.token) != Some(token)
            {
                Decision::DiscardBatch {
                    token,
                    reason: DiscardReason::Stale,
                }
            } else {
                s.pending_generation = None;
                if !success {
                    // failed attempts also wait out the cooldown
                    s.last_relevant_ts = Some(ts);
                    Decision::None
                } else if s.busy() {
                    Decision::DiscardBatch {
                        token,
                        reason: DiscardReason::Busy,
                    }
                } else {
                    s.last_relevant_ts = Some(ts);
                    Decision::DisplayBatch { token }
                }
            }
        }
    };

    s.mode = classify_mode(&s, cfg, ts);
    Ok((s, decision))
}

/// Explicit "Suggest" request: skips the idle threshold and cooldown and
/// supersedes any pending generation.
pub fn on_manual_request(
    state: &TimingState,
    cfg: &ConditionConfig,
    ts: Millis,
) -> Result<(TimingState, Decision), ManualRequestError> {
    if !cfg.proactive_enabled {
        return Err(ManualRequestError::Unsupported(cfg.name.clone()));
    }
    Ok(on_event(
        state,
        cfg,
        ActivityEvent::new(ActivityKind::ManualRequest, ts),
    )?)
}
