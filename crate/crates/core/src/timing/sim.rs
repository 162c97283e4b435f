//! Trace-driven simulation of the timing policy.
//!
//! A [`Trace`] is a list of user-side inputs on a millisecond timeline. The
//! simulator interleaves them with one-second clock ticks and with generation
//! completions that arrive a fixed latency after each request, using the same
//! same-timestamp ordering as the session driver: completions, then the tick,
//! then user input.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{on_event, ActivityEvent, ActivityKind, Decision, GenerationKind, TimingState};
use crate::clock::{Millis, TICK_MS};
use crate::condition::ConditionConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "input")]
pub enum TraceInput {
    Typing,
    ChatTyping,
    ChatSend,
    ChatResponse,
    Interaction,
    Run { is_error: bool },
    ManualRequest,
}

impl TraceInput {
    fn activity(self) -> ActivityKind {
        match self {
            TraceInput::Typing => ActivityKind::UserTyping,
            TraceInput::ChatTyping => ActivityKind::ChatTyping,
            TraceInput::ChatSend => ActivityKind::ChatSend,
            TraceInput::ChatResponse => ActivityKind::ChatResponseArrived,
            TraceInput::Interaction => ActivityKind::SuggestionInteraction,
            TraceInput::Run { is_error } => ActivityKind::RunCompleted { is_error },
            TraceInput::ManualRequest => ActivityKind::ManualRequest,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub ts: Millis,
    #[serde(flatten)]
    pub input: TraceInput,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub start_ts: Millis,
    pub end_ts: Millis,
    /// Sorted by `ts`.
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn new(start_ts: Millis, end_ts: Millis, mut events: Vec<TraceEvent>) -> Self {
        events.sort_by_key(|e| e.ts);
        Self {
            start_ts,
            end_ts,
            events,
        }
    }

    /// Total time spent idle beyond `threshold_ms`, summed over the gaps
    /// between user activity. Waiting on a chat reply counts as activity.
    pub fn cumulative_idle_ms(&self, threshold_ms: Millis) -> Millis {
        let mut idle = 0;
        let mut last_active = self.start_ts;
        let mut awaiting = false;
        let gap = |from: Millis, to: Millis| (to - from - threshold_ms).max(0);
        for ev in &self.events {
            if !awaiting {
                idle += gap(last_active, ev.ts);
            }
            match ev.input {
                TraceInput::ChatSend => awaiting = true,
                TraceInput::ChatResponse => awaiting = false,
                _ => {}
            }
            last_active = ev.ts;
        }
        if !awaiting {
            idle += gap(last_active, self.end_ts);
        }
        idle
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Step {
    pub ts: Millis,
    pub activity: ActivityKind,
    pub decision: Decision,
    /// Flags after the step was applied.
    pub typing_active: bool,
    pub awaiting_chat_reply: bool,
    /// The generation a completion step belongs to.
    pub generation: Option<(GenerationKind, bool)>,
    /// Current token and pending token before the step was applied.
    pub token_before: u64,
    pub pending_before: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Display {
    pub ts: Millis,
    pub kind: GenerationKind,
    pub manual: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SimOutcome {
    pub steps: Vec<Step>,
}

impl SimOutcome {
    pub fn displays(&self) -> Vec<Display> {
        self.steps
            .iter()
            .filter_map(|s| match (s.decision, s.generation) {
                (Decision::DisplayBatch { .. }, Some((kind, manual))) => Some(Display {
                    ts: s.ts,
                    kind,
                    manual,
                }),
                _ => None,
            })
            .collect()
    }

    pub fn display_count(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| matches!(s.decision, Decision::DisplayBatch { .. }))
            .count()
    }

    pub fn decisions(&self) -> Vec<(Millis, Decision)> {
        self.steps.iter().map(|s| (s.ts, s.decision)).collect()
    }
}

enum Next {
    Completion(usize),
    Tick,
    Input,
}

/// Run `trace` through the timing policy. Every generation completes
/// successfully `latency_ms` after it was requested.
pub fn simulate(cfg: &ConditionConfig, trace: &Trace, latency_ms: Millis) -> SimOutcome {
    let mut state = TimingState::started_at(trace.start_ts);
    let mut out = SimOutcome::default();
    let mut inflight: Vec<(Millis, u64)> = Vec::new();
    let mut generations: HashMap<u64, (GenerationKind, bool)> = HashMap::new();
    let mut next_tick = trace.start_ts + TICK_MS;
    let mut inputs = trace.events.iter().peekable();

    loop {
        let completion = inflight
            .iter()
            .enumerate()
            .min_by_key(|(_, (due, _))| *due)
            .map(|(i, (due, _))| (i, *due));
        let tick = (next_tick <= trace.end_ts).then_some(next_tick);
        let input = inputs.peek().map(|e| e.ts);

        let mut best: Option<(Millis, Next)> = None;
        if let Some((i, due)) = completion {
            best = Some((due, Next::Completion(i)));
        }
        if let Some(t) = tick {
            if best.as_ref().is_none_or(|(b, _)| t < *b) {
                best = Some((t, Next::Tick));
            }
        }
        if let Some(t) = input {
            if best.as_ref().is_none_or(|(b, _)| t < *b) {
                best = Some((t, Next::Input));
            }
        }
        let Some((ts, next)) = best else { break };
        if ts > trace.end_ts {
            break;
        }

        let (activity, generation) = match next {
            Next::Completion(i) => {
                let (_, token) = inflight.remove(i);
                (
                    ActivityKind::GenerationCompleted {
                        token,
                        success: true,
                    },
                    generations.get(&token).copied(),
                )
            }
            Next::Tick => {
                next_tick += TICK_MS;
                (ActivityKind::ClockTick, None)
            }
            Next::Input => (inputs.next().expect("peeked").input.activity(), None),
        };

        let token_before = state.generation_token;
        let pending_before = state.pending_generation.map(|p| p.token);
        let (next_state, decision) = on_event(&state, cfg, ActivityEvent::new(activity, ts))
            .expect("simulation timestamps are monotone");
        state = next_state;
        if let Decision::StartGeneration { kind, token } = decision {
            let manual = matches!(activity, ActivityKind::ManualRequest);
            generations.insert(token, (kind, manual));
            inflight.push((ts + latency_ms, token));
        }
        out.steps.push(Step {
            ts,
            activity,
            decision,
            typing_active: state.typing_active,
            awaiting_chat_reply: state.awaiting_chat_reply,
            generation,
            token_before,
            pending_before,
        });
    }
    out
}

/// A plausible coding session: typing bursts separated by pauses of varying
/// length, with occasional chats, suggestion interactions, runs and manual
/// requests.
pub fn random_trace<R: Rng + ?Sized>(rng: &mut R, duration_ms: Millis) -> Trace {
    let start_ts = 0;
    let end_ts = duration_ms;
    let mut events = Vec::new();
    let mut t: Millis = rng.gen_range(0..3_000);

    while t < end_ts {
        let roll: f64 = rng.gen();
        if roll < 0.50 {
            let burst_end = t + rng.gen_range(1_000..20_000);
            while t < burst_end && t < end_ts {
                events.push(TraceEvent { ts: t, input: TraceInput::Typing });
                t += rng.gen_range(150..900);
            }
        } else if roll < 0.60 {
            let burst_end = t + rng.gen_range(2_000..8_000);
            while t < burst_end {
                events.push(TraceEvent { ts: t, input: TraceInput::ChatTyping });
                t += rng.gen_range(150..700);
            }
            events.push(TraceEvent { ts: t, input: TraceInput::ChatSend });
            t += rng.gen_range(1_000..10_000);
            events.push(TraceEvent { ts: t, input: TraceInput::ChatResponse });
        } else if roll < 0.75 {
            for _ in 0..rng.gen_range(1..=3) {
                events.push(TraceEvent { ts: t, input: TraceInput::Interaction });
                t += rng.gen_range(500..3_000);
            }
        } else if roll < 0.90 {
            let is_error = rng.gen_bool(0.4);
            events.push(TraceEvent { ts: t, input: TraceInput::Run { is_error } });
        } else if roll < 0.95 {
            events.push(TraceEvent { ts: t, input: TraceInput::ManualRequest });
        }
        // pause
        let p: f64 = rng.gen();
        t += if p < 0.40 {
            rng.gen_range(500..4_000)
        } else if p < 0.75 {
            rng.gen_range(4_000..15_000)
        } else {
            rng.gen_range(15_000..60_000)
        };
    }
    events.retain(|e| e.ts <= end_ts);
    // a dangling ChatSend keeps the trace awaiting until the end, which is fine
    Trace::new(start_ts, end_ts, events)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn idle_only_trace_displays_every_cooldown() {
        let cfg = ConditionConfig::suggest();
        let trace = Trace::new(0, 60_000, vec![]);
        let out = simulate(&cfg, &trace, 1_000);
        let ts: Vec<_> = out.displays().iter().map(|d| d.ts).collect();
        // first request at 5 s (idle since session start), display at 6 s,
        // then requests 20 s after each display
        assert_eq!(ts, vec![6_000, 27_000, 48_000]);
    }

    #[test]
    fn cumulative_idle_ignores_awaited_chat() {
        let trace = Trace::new(
            0,
            30_000,
            vec![
                TraceEvent { ts: 10_000, input: TraceInput::ChatSend },
                TraceEvent { ts: 25_000, input: TraceInput::ChatResponse },
            ],
        );
        // 0..10 s: 5 s beyond the threshold; awaiting 10..25 s; 25..30 s: 0
        assert_eq!(trace.cumulative_idle_ms(5_000), 5_000);
    }

    #[test]
    fn random_traces_are_sorted_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let trace = random_trace(&mut rng, 180_000);
            assert!(trace.events.windows(2).all(|w| w[0].ts <= w[1].ts));
            assert!(trace.events.iter().all(|e| e.ts <= trace.end_ts));
        }
    }
}
