//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Run with `cargo test --test acceptance`. Exits nonzero if any criterion
//! fails or runs past its time budget.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::panic::{self, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use proactive_core::clock::Millis;
use proactive_core::condition::ConditionConfig;
use proactive_core::diff::{apply_hunks, compute_diff};
use proactive_core::suggestion::parse::parse_suggestions_bytes;
use proactive_core::suggestion::SuggestionCategory;
use proactive_core::tasks::TaskRegistry;
use proactive_core::telemetry::audit::audit_session;
use proactive_core::telemetry::metrics::{compute_metrics, InteractionMetrics, Metric, MetricsOptions, Weighting};
use proactive_core::telemetry::replay::{replay_session, select_session, ReplaySource};
use proactive_core::telemetry::schedule::{assign_condition, BASELINE, PROACTIVE_VARIANTS};
use proactive_core::telemetry::{parse_log, read_log, EventKind, JsonlFileSink, MemorySink};
use proactive_core::timing::sim::{random_trace, simulate, SimOutcome, Trace, TraceEvent, TraceInput};
use proactive_core::timing::{ActivityKind, Decision, DiscardReason, GenerationKind};

type Check = Result<(), String>;
type Criterion = (&'static str, u64, fn() -> Check);
type EventPred<'a> = Box<dyn Fn(&proactive_core::telemetry::TelemetryEvent) -> bool + 'a>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("condition fidelity", 1_000, c1_conditions),
        ("timing suite", 10_000, c2_timing),
        ("monotone frequency", 10_000, c3_monotone),
        ("parser corpus and fuzz", 30_000, c4_parser),
        ("diff oracle", 30_000, c5_diff),
        ("replay determinism", 5_000, c6_replay),
        ("metrics oracle", 5_000, c7_metrics),
        ("headless end-to-end", 20_000, c8_end_to_end),
        ("schedule counterbalance", 5_000, c9_schedule),
    ];
    let mut failed = 0;
    for (i, (name, budget_ms, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let result = result.and_then(|()| {
            ensure(elapsed <= Duration::from_millis(*budget_ms), || {
                format!("took {} ms, budget {budget_ms} ms", elapsed.as_millis())
            })
        });
        match result {
            Ok(()) => println!("criterion {}: PASS  {name} ({} ms)", i + 1, elapsed.as_millis()),
            Err(e) => {
                failed += 1;
                println!("criterion {}: FAIL  {name} ({} ms)", i + 1, elapsed.as_millis());
                for line in e.lines().take(20) {
                    println!("    {line}");
                }
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---- 1

fn c1_conditions() -> Check {
    let secs = |d: Duration| d.as_secs_f64();
    let b = ConditionConfig::baseline();
    ensure(b.name == "baseline" && !b.proactive_enabled && !b.preview_enabled, || format!("baseline: {b:?}"))?;

    for (cfg, name, preview) in [
        (ConditionConfig::suggest(), "suggest", false),
        (ConditionConfig::suggest_preview(), "suggest_preview", true),
    ] {
        ensure(cfg.name == name, || format!("name {}", cfg.name))?;
        ensure(cfg.proactive_enabled, || format!("{name}: proactivity off"))?;
        ensure(cfg.preview_enabled == preview, || format!("{name}: preview_enabled"))?;
        ensure(secs(cfg.idle_threshold) == 5.0, || format!("{name}: idle {:?}", cfg.idle_threshold))?;
        ensure(secs(cfg.cooldown) == 20.0, || format!("{name}: cooldown {:?}", cfg.cooldown))?;
        ensure(cfg.suggestions_per_batch == 3, || format!("{name}: batch {}", cfg.suggestions_per_batch))?;
        ensure(cfg.guiding_prompts, || format!("{name}: guiding prompts off"))?;
    }

    let p = ConditionConfig::persistent_suggest();
    ensure(p.name == "persistent_suggest", || p.name.clone())?;
    ensure(p.proactive_enabled && !p.preview_enabled, || format!("persistent flags: {p:?}"))?;
    ensure(secs(p.idle_threshold) == 5.0, || format!("persistent idle {:?}", p.idle_threshold))?;
    ensure(secs(p.cooldown) == 5.0, || format!("persistent cooldown {:?}", p.cooldown))?;
    ensure(p.suggestions_per_batch == 5, || format!("persistent batch {}", p.suggestions_per_batch))?;
    ensure(!p.guiding_prompts, || "persistent guiding prompts on".into())?;

    let names: Vec<_> = ConditionConfig::builtins().into_iter().map(|c| c.name).collect();
    ensure(names == ["baseline", "suggest", "suggest_preview", "persistent_suggest"], || format!("{names:?}"))
}

// ---- 2

fn ev(ts: Millis, input: TraceInput) -> TraceEvent {
    TraceEvent { ts, input }
}

fn typing(from: Millis, to: Millis, every: Millis) -> Vec<TraceEvent> {
    let mut v: Vec<_> = (0..).map(|i| from + i * every).take_while(|&t| t < to).map(|t| ev(t, TraceInput::Typing)).collect();
    v.push(ev(to, TraceInput::Typing));
    v
}

fn grid_ceil(ts: Millis) -> Millis {
    (ts + 999).div_euclid(1_000) * 1_000
}

fn first_start(out: &SimOutcome) -> Option<(Millis, GenerationKind)> {
    out.steps.iter().find_map(|s| match s.decision {
        Decision::StartGeneration { kind, .. } => Some((s.ts, kind)),
        _ => None,
    })
}

/// The properties every simulated run must satisfy.
fn timing_invariants(cfg: &ConditionConfig, trace: &Trace, out: &SimOutcome) -> Check {
    let cooldown = cfg.cooldown_ms();
    let mut last_display: Option<Millis> = None;
    let mut requested_at: HashMap<u64, usize> = HashMap::new();

    for (i, s) in out.steps.iter().enumerate() {
        if let Decision::DisplayBatch { .. } = s.decision {
            // (a)
            ensure(!s.typing_active && !s.awaiting_chat_reply, || format!("display while busy at {}", s.ts))?;
            // (c)
            if s.generation == Some((GenerationKind::Standard, false)) {
                if let Some(prev) = last_display {
                    ensure(s.ts - prev >= cooldown, || {
                        format!("standard display at {} only {} ms after the one at {prev}", s.ts, s.ts - prev)
                    })?;
                }
            }
            last_display = Some(s.ts);
        }
        // (d)
        if let ActivityKind::RunCompleted { is_error: true } = s.activity {
            ensure(
                matches!(s.decision, Decision::StartGeneration { kind: GenerationKind::Debug, .. }),
                || format!("erroring run at {} gave {:?}", s.ts, s.decision),
            )?;
        }
        if let Decision::StartGeneration { token, .. } = s.decision {
            requested_at.insert(token, i);
        }
        // (e): stale iff something invalidated the request while in flight
        if let ActivityKind::GenerationCompleted { token, .. } = s.activity {
            let from = requested_at[&token];
            let invalidated = out.steps[from + 1..i].iter().any(|x| {
                matches!(x.activity, ActivityKind::UserTyping | ActivityKind::ChatTyping | ActivityKind::ChatSend)
                    || matches!(x.decision, Decision::StartGeneration { .. })
            });
            let discarded_stale = matches!(s.decision, Decision::DiscardBatch { reason: DiscardReason::Stale, .. });
            ensure(invalidated == discarded_stale, || {
                format!(
                    "completion of token {token} at {}: invalidated={invalidated}, decision {:?} (trace of {} events)",
                    s.ts,
                    s.decision,
                    trace.events.len()
                )
            })?;
        }
    }
    Ok(())
}

fn c2_timing() -> Check {
    let suggest = ConditionConfig::suggest();
    let mut scripted = 0;

    // (b) typing stops at e; the first request lands on the first tick at or after e + 5 s
    for k in 0..20 {
        let e = 2_000 + k * 1_337;
        let trace = Trace::new(0, e + 40_000, typing(0, e, 300));
        let out = simulate(&suggest, &trace, 1_000);
        let want = grid_ceil(e + 5_000);
        ensure(first_start(&out) == Some((want, GenerationKind::Standard)), || {
            format!("typing until {e}: first request {:?}, want {want}", first_start(&out))
        })?;
        timing_invariants(&suggest, &trace, &out)?;
        scripted += 1;
    }
    // (b) with the cooldown still running from an interaction
    for k in 0..10 {
        let e = 10_000 + k * 733;
        let x = e - 2_000 - k * 100;
        let mut events = typing(0, e, 250);
        events.push(ev(x, TraceInput::Interaction));
        let trace = Trace::new(0, e + 60_000, events);
        let out = simulate(&suggest, &trace, 1_000);
        let want = grid_ceil(e + 5_000).max(grid_ceil(x + 20_000));
        ensure(first_start(&out) == Some((want, GenerationKind::Standard)), || {
            format!("interaction at {x}, typing until {e}: first request {:?}, want {want}", first_start(&out))
        })?;
        timing_invariants(&suggest, &trace, &out)?;
        scripted += 1;
    }
    // (a) nothing shows while waiting on a chat reply
    for k in 0..10 {
        let send = 3_000 + k * 500;
        let reply = send + 10_000 + k * 5_000;
        let trace = Trace::new(
            0,
            reply + 30_000,
            vec![ev(send, TraceInput::ChatSend), ev(reply, TraceInput::ChatResponse)],
        );
        let out = simulate(&suggest, &trace, 800 + k * 300);
        let sent = out.steps.iter().position(|s| s.activity == ActivityKind::ChatSend).ok_or("send step missing")?;
        for s in &out.steps[sent..] {
            if s.ts < reply {
                ensure(
                    !matches!(s.decision, Decision::DisplayBatch { .. } | Decision::StartGeneration { .. }),
                    || format!("{:?} at {} while awaiting a reply ({send}..{reply})", s.decision, s.ts),
                )?;
            }
        }
        ensure(out.display_count() > 0, || "no display after the reply".into())?;
        timing_invariants(&suggest, &trace, &out)?;
        scripted += 1;
    }
    // (a) nothing shows during a long typing burst, even with a batch in flight
    for k in 0..10 {
        let start = 6_000 + k * 200;
        let end = start + 30_000 + k * 6_000;
        let trace = Trace::new(0, end + 10_000, typing(start, end, 400));
        let out = simulate(&suggest, &trace, 1_500 + k * 200);
        for s in &out.steps {
            if s.ts >= start && s.ts < end + 5_000 {
                ensure(!matches!(s.decision, Decision::DisplayBatch { .. }), || {
                    format!("display at {} during typing {start}..{end}", s.ts)
                })?;
            }
        }
        timing_invariants(&suggest, &trace, &out)?;
        scripted += 1;
    }
    // (d) erroring runs start a debug batch in the same step, whatever else is going on
    for k in 0..10 {
        let run_at = 4_000 + k * 3_100;
        let mut events = typing(0, 3_000 + k * 2_500, 300);
        if k % 3 == 0 {
            events.push(ev(run_at - 100, TraceInput::ChatSend));
        }
        events.push(ev(run_at, TraceInput::Run { is_error: true }));
        let trace = Trace::new(0, run_at + 30_000, events);
        let cfg = if k % 2 == 0 { ConditionConfig::suggest() } else { ConditionConfig::persistent_suggest() };
        let out = simulate(&cfg, &trace, 1_000);
        let step = out
            .steps
            .iter()
            .find(|s| s.activity == ActivityKind::RunCompleted { is_error: true })
            .ok_or("run step missing")?;
        ensure(step.ts == run_at, || format!("run step at {}", step.ts))?;
        ensure(
            matches!(step.decision, Decision::StartGeneration { kind: GenerationKind::Debug, .. }),
            || format!("run at {run_at}: {:?}", step.decision),
        )?;
        timing_invariants(&cfg, &trace, &out)?;
        scripted += 1;
    }
    // (e) typing during an in-flight batch makes it stale
    for k in 0..10 {
        let latency = 2_000 + k * 250;
        // request at 5 s, typing starts before it completes
        let type_at = 5_000 + 100 + k * 150;
        let trace = Trace::new(0, 30_000, typing(type_at, type_at + 1_000, 300));
        let out = simulate(&suggest, &trace, latency);
        let done = out
            .steps
            .iter()
            .find(|s| matches!(s.activity, ActivityKind::GenerationCompleted { .. }))
            .ok_or("no completion")?;
        ensure(done.ts == 5_000 + latency, || format!("completion at {}", done.ts))?;
        ensure(
            matches!(done.decision, Decision::DiscardBatch { reason: DiscardReason::Stale, .. }),
            || format!("in-flight batch not discarded: {:?}", done.decision),
        )?;
        timing_invariants(&suggest, &trace, &out)?;
        scripted += 1;
    }
    ensure(scripted >= 50, || format!("{scripted} scripted traces"))?;

    let configs = [
        ConditionConfig::suggest(),
        ConditionConfig::suggest_preview(),
        ConditionConfig::persistent_suggest(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for i in 0..1_000 {
        let cfg = &configs[i % configs.len()];
        let trace = random_trace(&mut rng, 180_000);
        let latency = rng.gen_range(300..6_000);
        let out = simulate(cfg, &trace, latency);
        timing_invariants(cfg, &trace, &out).map_err(|e| format!("random trace {i} ({}): {e}", cfg.name))?;
    }
    Ok(())
}

// ---- 3

fn c3_monotone() -> Check {
    let suggest = ConditionConfig::suggest();
    let persistent = ConditionConfig::persistent_suggest();
    let mut rng = ChaCha8Rng::seed_from_u64(0xf00d);
    let mut strict_cases = 0;
    let mut problems = Vec::new();
    for i in 0..500 {
        let trace = random_trace(&mut rng, 300_000);
        let latency = rng.gen_range(500..4_000);
        let s = simulate(&suggest, &trace, latency).display_count();
        let p = simulate(&persistent, &trace, latency).display_count();
        let idle = trace.cumulative_idle_ms(suggest.idle_threshold_ms());
        if p < s {
            problems.push(format!("trace {i}: persistent {p} < suggest {s}"));
        }
        if idle >= 60_000 {
            strict_cases += 1;
            if p <= s {
                problems.push(format!("trace {i}: {idle} ms idle but persistent {p} <= suggest {s}"));
            }
        }
    }
    ensure(strict_cases > 0, || "no trace reached 60 s of idle".into())?;
    ensure(problems.is_empty(), || format!("{} violations\n{}", problems.len(), problems.join("\n")))
}

// ---- 4

const FUZZ_TOKENS: &[&str] = &[
    "[", "]", "{", "}", "\"", ",", ":", "```", "```json\n", "```python\n", "\n", "1. ", "- ", "**",
    "\"type\": ", "\"summary\": ", "\"code\": null", "\\", "\u{0}", "\u{fffd}", "é", "[Adding unit tests]",
];

fn mutate(rng: &mut ChaCha8Rng, src: &[u8]) -> Vec<u8> {
    let mut v = src.to_vec();
    for _ in 0..rng.gen_range(1..=8) {
        let at = if v.is_empty() { 0 } else { rng.gen_range(0..=v.len()) };
        match rng.gen_range(0..5) {
            0 if at < v.len() => v[at] = rng.gen(),
            1 if at < v.len() => {
                let end = (at + rng.gen_range(1..40)).min(v.len());
                v.drain(at..end);
            }
            2 => v.truncate(at),
            3 if !v.is_empty() => {
                let from = rng.gen_range(0..v.len());
                let end = (from + rng.gen_range(1..60)).min(v.len());
                let chunk = v[from..end].to_vec();
                v.splice(at..at, chunk);
            }
            _ => {
                let tok = FUZZ_TOKENS.choose(rng).expect("tokens");
                v.splice(at..at, tok.bytes());
            }
        }
    }
    v
}

fn c4_parser() -> Check {
    let files = common::fixtures();
    ensure(files.len() >= 20, || format!("only {} fixtures", files.len()))?;
    let failures: Vec<_> = files
        .iter()
        .filter_map(|p| common::check(p).err().map(|e| format!("{}: {e}", p.display())))
        .collect();
    ensure(failures.is_empty(), || failures.join("\n"))?;

    let corpus: Vec<Vec<u8>> = files.iter().map(|p| std::fs::read(p).expect("fixture")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0xfa22);
    let prev_hook = panic::take_hook();
    panic::set_hook(Box::new(|_| {}));
    let mut result = Ok(());
    for i in 0..10_000 {
        let input: Vec<u8> = if i % 3 == 0 {
            let len = rng.gen_range(0..2_000);
            (0..len).map(|_| rng.gen()).collect()
        } else {
            let src = corpus.choose(&mut rng).expect("corpus");
            mutate(&mut rng, src)
        };
        let max_n = rng.gen_range(1..=8);
        let got = panic::catch_unwind(AssertUnwindSafe(|| parse_suggestions_bytes(&input, max_n)));
        let check = match got {
            Err(_) => Err(format!("input {i} panicked: {:?}", String::from_utf8_lossy(&input))),
            Ok(Err(_)) => Ok(()),
            Ok(Ok(batch)) => ensure(
                !batch.suggestions.is_empty()
                    && batch.suggestions.len() <= max_n
                    && batch
                        .suggestions
                        .iter()
                        .all(|s| !s.summary.trim().is_empty() && SuggestionCategory::ALL.contains(&s.category)),
                || format!("input {i}: bad batch {batch:?}"),
            ),
        };
        if check.is_err() {
            result = check;
            break;
        }
    }
    panic::set_hook(prev_hook);
    result
}

// ---- 5

const SYMBOLS: [&str; 3] = ["a", "b", "c"];

fn text_of(seq: &[u8]) -> String {
    seq.iter().map(|&s| SYMBOLS[s as usize]).collect::<Vec<_>>().join("\n")
}

fn is_subsequence(needle: &[u8], hay: &[u8]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|n| it.any(|h| h == n))
}

/// Longest common subsequence by trying every subset of the shorter side.
fn brute_lcs(a: &[u8], b: &[u8]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut best = 0;
    for mask in 0u32..(1 << short.len()) {
        let len = mask.count_ones() as usize;
        if len <= best {
            continue;
        }
        let sub: Vec<u8> = (0..short.len()).filter(|i| mask & (1 << i) != 0).map(|i| short[i]).collect();
        if is_subsequence(&sub, long) {
            best = len;
        }
    }
    best
}

fn random_seq(rng: &mut ChaCha8Rng, max_len: usize) -> Vec<u8> {
    let len = rng.gen_range(0..=max_len);
    (0..len).map(|_| rng.gen_range(0..3)).collect()
}

fn check_pair(a: &[u8], b: &[u8], lcs: usize, round_trip: bool) -> Check {
    let (ta, tb) = (text_of(a), text_of(b));
    let hunks = compute_diff(&ta, &tb);
    let removed: usize = hunks.iter().map(|h| h.old_len).sum();
    let added: usize = hunks.iter().map(|h| h.new_len).sum();
    ensure(removed == a.len() - lcs && added == b.len() - lcs, || {
        format!("{ta:?} -> {tb:?}: removed {removed}, added {added}, lcs {lcs}")
    })?;
    if round_trip {
        let back = apply_hunks(&ta, &hunks).map_err(|e| format!("{ta:?} -> {tb:?}: {e}"))?;
        ensure(back == tb, || format!("{ta:?} -> {tb:?}: round trip gave {back:?}"))?;
    }
    Ok(())
}

fn c5_diff() -> Check {
    // every sequence up to 6 symbols, longest first
    let mut seqs: Vec<Vec<u8>> = vec![vec![]];
    let mut frontier: Vec<Vec<u8>> = vec![vec![]];
    for _ in 0..6 {
        frontier = frontier
            .iter()
            .flat_map(|s| (0..3u8).map(move |c| [s.as_slice(), &[c]].concat()))
            .collect();
        seqs.extend(frontier.iter().cloned());
    }
    seqs.sort_by(|x, y| y.len().cmp(&x.len()).then_with(|| x.cmp(y)));
    let index: HashMap<&[u8], usize> = seqs.iter().enumerate().map(|(i, s)| (s.as_slice(), i)).collect();
    let words = seqs.len().div_ceil(64);

    // bitset of every subsequence of each sequence
    let subsets: Vec<Vec<u64>> = seqs
        .iter()
        .map(|s| {
            let mut bits = vec![0u64; words];
            for mask in 0u32..(1 << s.len()) {
                let sub: Vec<u8> = (0..s.len()).filter(|i| mask & (1 << i) != 0).map(|i| s[i]).collect();
                let k = index[sub.as_slice()];
                bits[k / 64] |= 1 << (k % 64);
            }
            bits
        })
        .collect();

    for (i, a) in seqs.iter().enumerate() {
        for (j, b) in seqs.iter().enumerate() {
            let first = subsets[i]
                .iter()
                .zip(&subsets[j])
                .enumerate()
                .find_map(|(w, (x, y))| {
                    let both = x & y;
                    (both != 0).then(|| w * 64 + both.trailing_zeros() as usize)
                })
                .expect("the empty sequence is common");
            check_pair(a, b, seqs[first].len(), true)?;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0xd1ff);
    for _ in 0..3_000 {
        let a = random_seq(&mut rng, 12);
        let b = random_seq(&mut rng, 12);
        if a.len().max(b.len()) <= 6 {
            continue;
        }
        check_pair(&a, &b, brute_lcs(&a, &b), false)?;
    }
    for _ in 0..1_000 {
        let a = random_seq(&mut rng, 12);
        let b = random_seq(&mut rng, 12);
        check_pair(&a, &b, brute_lcs(&a, &b), true)?;
    }
    Ok(())
}

// ---- 6

fn c6_replay() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("session.jsonl");
    let sink = Arc::new(JsonlFileSink::open(&path).map_err(|e| e.to_string())?);
    common::e2e::run(sink)?;

    let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
    let recorded: Vec<&str> = text.lines().skip(1).collect();
    let log = read_log(&path).map_err(|e| e.to_string())?;
    ensure(log.malformed == 0, || format!("{} malformed lines", log.malformed))?;
    let events = select_session(&log, None).map_err(|e| e.to_string())?;

    for (label, source) in [
        ("recorded", ReplaySource::Recorded),
        ("scripted provider", ReplaySource::Provider(Arc::new(common::e2e::provider()))),
    ] {
        let report = replay_session(&events, source).map_err(|e| format!("{label}: {e}"))?;
        ensure(report.original.iter().map(String::as_str).eq(recorded.iter().copied()), || {
            format!("{label}: original lines do not match the file")
        })?;
        ensure(report.replayed.iter().map(String::as_str).eq(recorded.iter().copied()), || {
            let i = report.first_divergence().unwrap_or(0);
            format!(
                "{label}: diverges at line {i}\n  recorded {:?}\n  replayed {:?}",
                recorded.get(i),
                report.replayed.get(i)
            )
        })?;
    }
    Ok(())
}

// ---- 7

/// Writes logs the way the session logger lays them out.
struct LogWriter {
    lines: Vec<String>,
    seq: HashMap<String, u64>,
}

impl LogWriter {
    fn new() -> Self {
        Self {
            lines: vec![json!({ "schema_version": 1 }).to_string()],
            seq: HashMap::new(),
        }
    }

    fn event(&mut self, session: &str, condition: &str, task: Option<&str>, kind: &str, payload: serde_json::Value) {
        let seq = self.seq.entry(session.to_string()).or_insert(0);
        *seq += 1;
        self.lines.push(
            json!({
                "session_id": session,
                "condition_name": condition,
                "task_id": task,
                "seq": *seq,
                "ts_ms": *seq as i64 * 1_000,
                "kind": kind,
                "payload": payload,
            })
            .to_string(),
        );
    }

    fn created(&mut self, session: &str, condition: &str, participant: Option<&str>) {
        self.event(session, condition, None, "session_created", json!({ "condition": condition, "participant_id": participant }));
    }

    fn interactions(&mut self, session: &str, condition: &str, task: Option<&str>, kind: &str, n: usize, cat: &str) {
        for _ in 0..n {
            self.event(session, condition, task, kind, json!({ "suggestion_id": "s-1", "category": cat }));
        }
    }
}

const METRIC_KINDS: [(&str, Metric); 6] = [
    ("suggestion_expand", Metric::Expands),
    ("suggestion_copy", Metric::Copies),
    ("suggestion_preview", Metric::Previews),
    ("suggestion_request", Metric::ManualRequests),
    ("suggestion_accept", Metric::Accepts),
    ("suggestion_delete", Metric::Deletes),
];
const CATS: [&str; 4] = ["add_tests", "debug_runtime", "explain_code", "complete_code"];

fn synthetic_logs() -> Vec<String> {
    let mut logs = Vec::new();

    // one participant, two tasks with 4 and 2 expands
    let mut w = LogWriter::new();
    w.created("s1", "suggest", Some("p1"));
    w.event("s1", "suggest", Some("todo_list"), "task_start", json!({ "task_id": "todo_list" }));
    w.interactions("s1", "suggest", Some("todo_list"), "suggestion_expand", 4, "add_tests");
    w.event("s1", "suggest", Some("storefront"), "task_start", json!({ "task_id": "storefront" }));
    w.interactions("s1", "suggest", Some("storefront"), "suggestion_expand", 2, "explain_code");
    logs.push(w.lines.join("\n"));

    // two sessions interleaved in one file, no tasks, one without a participant id
    let mut w = LogWriter::new();
    w.created("s2", "persistent_suggest", Some("p2"));
    w.created("s3", "baseline", None);
    for i in 0..5 {
        w.interactions("s2", "persistent_suggest", None, "suggestion_accept", i % 3, CATS[i % 4]);
        w.interactions("s3", "baseline", None, "suggestion_copy", 1, "explain_code");
        w.interactions("s2", "persistent_suggest", None, "suggestion_delete", 1, CATS[(i + 1) % 4]);
    }
    logs.push(w.lines.join("\n"));

    // events before the first task, after a submit, plus a damaged line
    let mut w = LogWriter::new();
    w.created("s4", "suggest_preview", Some("p3"));
    w.interactions("s4", "suggest_preview", None, "suggestion_expand", 3, "add_tests");
    w.event("s4", "suggest_preview", Some("weather_trends"), "task_start", json!({ "task_id": "weather_trends" }));
    w.interactions("s4", "suggest_preview", Some("weather_trends"), "suggestion_preview", 2, "complete_code");
    w.event("s4", "suggest_preview", Some("weather_trends"), "task_submit", json!({ "task_id": "weather_trends" }));
    w.interactions("s4", "suggest_preview", Some("weather_trends"), "suggestion_request", 1, "");
    w.lines.push("{\"session_id\":\"s4\",\"condition_na".into());
    logs.push(w.lines.join("\n"));

    // the same participant in a baseline and a proactive session
    let mut w = LogWriter::new();
    for (sid, cond) in [("s5", "baseline"), ("s6", "suggest")] {
        w.created(sid, cond, Some("p4"));
        for task in ["sales_analysis", "storefront"] {
            w.event(sid, cond, Some(task), "task_start", json!({ "task_id": task }));
            w.interactions(sid, cond, Some(task), "suggestion_expand", task.len() % 5, "debug_runtime");
            w.interactions(sid, cond, Some(task), "suggestion_accept", 2, "debug_runtime");
        }
    }
    logs.push(w.lines.join("\n"));

    // many participants, random activity
    let mut rng = ChaCha8Rng::seed_from_u64(0x3e7);
    let mut w = LogWriter::new();
    let conds = ["baseline", "suggest", "suggest_preview", "persistent_suggest"];
    for p in 0..8 {
        let sid = format!("r{p}");
        let cond = conds[p % 4];
        w.created(&sid, cond, Some(&format!("q{}", p / 2)));
        for t in 0..rng.gen_range(1..=3) {
            let task = format!("task{t}");
            w.event(&sid, cond, Some(&task), "task_start", json!({ "task_id": task }));
            for _ in 0..rng.gen_range(0..25) {
                let (kind, _) = METRIC_KINDS.choose(&mut rng).expect("kinds");
                let other = *["suggestion_shown", "chat_send", "code_update"].choose(&mut rng).expect("others");
                let kind = if rng.gen_bool(0.2) { other } else { kind };
                let cat = *CATS.choose(&mut rng).expect("cats");
                w.interactions(&sid, cond, Some(&task), kind, 1, cat);
            }
        }
    }
    logs.push(w.lines.join("\n"));
    logs
}

fn field<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    let pat = format!("\"{key}\":\"");
    let start = line.find(&pat)? + pat.len();
    let len = line[start..].find('"')?;
    Some(&line[start..start + len])
}

#[derive(Default)]
struct OracleTask {
    participant: String,
    condition: String,
    counts: [u64; 6],
}

#[derive(Default)]
struct Oracle {
    tasks: Vec<OracleTask>,
    accepted: BTreeMap<(String, String), u64>,
    deleted: BTreeMap<(String, String), u64>,
    unattributed: usize,
    malformed: usize,
}

/// Counts by plain string matching on log lines.
fn grep_count(texts: &[String], by_condition: bool) -> Oracle {
    let mut o = Oracle::default();
    let mut sessions: Vec<String> = Vec::new();
    let mut lines_of: HashMap<String, Vec<&str>> = HashMap::new();
    for text in texts {
        for line in text.lines() {
            if line.contains("\"schema_version\"") && !line.contains("\"kind\"") {
                continue;
            }
            if !line.ends_with('}') {
                o.malformed += 1;
                continue;
            }
            let sid = field(line, "session_id").expect("session id").to_string();
            if !lines_of.contains_key(&sid) {
                sessions.push(sid.clone());
            }
            lines_of.entry(sid).or_default().push(line);
        }
    }
    let group = |cond: &str| if by_condition { cond.to_string() } else { "all".to_string() };
    for sid in sessions {
        let lines = &lines_of[&sid];
        let participant = lines
            .iter()
            .find(|l| l.contains("\"kind\":\"session_created\""))
            .and_then(|l| field(l, "participant_id"))
            .unwrap_or(&sid)
            .to_string();
        let has_tasks = lines.iter().any(|l| l.contains("\"kind\":\"task_start\""));
        let mut current = None;
        if !has_tasks {
            o.tasks.push(OracleTask {
                participant: participant.clone(),
                condition: field(lines[0], "condition_name").unwrap_or_default().to_string(),
                counts: [0; 6],
            });
            current = Some(o.tasks.len() - 1);
        }
        for line in lines {
            if line.contains("\"kind\":\"task_start\"") {
                o.tasks.push(OracleTask {
                    participant: participant.clone(),
                    condition: field(line, "condition_name").unwrap_or_default().to_string(),
                    counts: [0; 6],
                });
                current = Some(o.tasks.len() - 1);
                continue;
            }
            let Some(t) = current else {
                o.unattributed += 1;
                continue;
            };
            for (m, (kind, _)) in METRIC_KINDS.iter().enumerate() {
                if line.contains(&format!("\"kind\":\"{kind}\"")) {
                    o.tasks[t].counts[m] += 1;
                    let cat = field(line, "category").filter(|c| !c.is_empty());
                    let g = group(&o.tasks[t].condition);
                    if let Some(cat) = cat {
                        match *kind {
                            "suggestion_accept" => *o.accepted.entry((g, cat.to_string())).or_default() += 1,
                            "suggestion_delete" => *o.deleted.entry((g, cat.to_string())).or_default() += 1,
                            _ => {}
                        }
                    }
                }
            }
        }
    }
    if !by_condition {
        for t in &mut o.tasks {
            t.condition = "all".into();
        }
    }
    o
}

fn mean_se(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, Some((ss / (n - 1.0)).sqrt() / n.sqrt()))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

fn compare(m: &InteractionMetrics, o: &Oracle, weighting: Weighting) -> Check {
    ensure(m.unattributed_events == o.unattributed, || {
        format!("unattributed {} vs {}", m.unattributed_events, o.unattributed)
    })?;
    ensure(m.malformed_lines == o.malformed, || format!("malformed {} vs {}", m.malformed_lines, o.malformed))?;
    let groups: BTreeSet<&str> = o.tasks.iter().map(|t| t.condition.as_str()).collect();
    let got: BTreeSet<&str> = m.groups.iter().map(|g| g.condition.as_str()).collect();
    ensure(groups == got, || format!("groups {got:?} vs {groups:?}"))?;

    for g in &m.groups {
        let tasks: Vec<&OracleTask> = o.tasks.iter().filter(|t| t.condition == g.condition).collect();
        let people: BTreeSet<&str> = tasks.iter().map(|t| t.participant.as_str()).collect();
        ensure(g.n_tasks == tasks.len() && g.n_participants == people.len(), || {
            format!("{}: {} tasks / {} people vs {} / {}", g.condition, g.n_tasks, g.n_participants, tasks.len(), people.len())
        })?;
        for (mi, (_, metric)) in METRIC_KINDS.iter().enumerate() {
            let values: Vec<f64> = match weighting {
                Weighting::Task => tasks.iter().map(|t| t.counts[mi] as f64).collect(),
                Weighting::Participant => people
                    .iter()
                    .map(|p| {
                        let theirs: Vec<_> = tasks.iter().filter(|t| t.participant == *p).collect();
                        theirs.iter().map(|t| t.counts[mi]).sum::<u64>() as f64 / theirs.len() as f64
                    })
                    .collect(),
            };
            let (mean, se) = mean_se(&values);
            let s = g.metrics[metric];
            let se_ok = match (s.se, se) {
                (Some(a), Some(b)) => close(a, b),
                (None, None) => true,
                _ => false,
            };
            ensure(close(s.mean, mean) && se_ok && s.n == values.len(), || {
                format!("{} {:?}: got {:?}, oracle {mean} ± {se:?} over {}", g.condition, metric, s, values.len())
            })?;
        }
        for (which, got, want) in [
            ("accepts", &g.acceptance_by_category, &o.accepted),
            ("deletes", &g.deletes_by_category, &o.deleted),
        ] {
            let got: BTreeMap<String, u64> = got.iter().map(|(c, n)| (c.key().to_string(), *n)).collect();
            let want: BTreeMap<String, u64> = want
                .iter()
                .filter(|((grp, _), _)| *grp == g.condition)
                .map(|((_, c), n)| (c.clone(), *n))
                .collect();
            ensure(got == want, || format!("{} {which} by category: {got:?} vs {want:?}", g.condition))?;
        }
    }
    Ok(())
}

fn c7_metrics() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let logs = synthetic_logs();
    let mut paths = Vec::new();
    for (i, text) in logs.iter().enumerate() {
        let p = dir.path().join(format!("log{i}.jsonl"));
        std::fs::write(&p, text).map_err(|e| e.to_string())?;
        paths.push(p);
    }
    ensure(paths.len() == 5, || "need five logs".into())?;

    for by_condition in [false, true] {
        for weighting in [Weighting::Participant, Weighting::Task] {
            let opts = MetricsOptions { by_condition, weighting };
            let oracle = grep_count(&logs, by_condition);
            // each log on its own, then all together
            for (i, p) in paths.iter().enumerate() {
                let m = compute_metrics(&[p], opts).map_err(|e| e.to_string())?;
                compare(&m, &grep_count(&logs[i..=i], by_condition), weighting)
                    .map_err(|e| format!("log {i}, {opts:?}: {e}"))?;
            }
            let m = compute_metrics(&paths, opts).map_err(|e| e.to_string())?;
            compare(&m, &oracle, weighting).map_err(|e| format!("all logs, {opts:?}: {e}"))?;
        }
    }

    // per-task expands {4, 2}
    let m = compute_metrics(
        &paths[..1],
        MetricsOptions { by_condition: true, weighting: Weighting::Task },
    )
    .map_err(|e| e.to_string())?;
    let s = m.groups[0].metrics[&Metric::Expands];
    ensure(close(s.mean, 3.0) && s.se.is_some_and(|se| close(se, 1.0)), || {
        format!("expands {{4,2}}: {s:?}, want 3.0 ± 1.0")
    })
}

// ---- 8

fn c8_end_to_end() -> Check {
    let sink = Arc::new(MemorySink::default());
    let d = common::e2e::run(sink.clone())?;
    ensure(d.now() >= common::e2e::END_MS, || format!("stopped at {}", d.now()))?;
    let events = sink.events();

    let position = |pred: &dyn Fn(&proactive_core::telemetry::TelemetryEvent) -> bool, after: usize| {
        events.iter().skip(after).position(pred).map(|i| i + after)
    };
    let origin = |e: &proactive_core::telemetry::TelemetryEvent| e.payload["origin"].as_str().unwrap_or("").to_string();
    let mut at = 0;
    let steps: [(&str, EventPred); 7] = [
        ("generate", Box::new(|e| e.kind == EventKind::SuggestionsGenerated)),
        ("display", Box::new(|e| e.kind == EventKind::SuggestionShown && origin(e) == "proactive_standard")),
        ("expand", Box::new(|e| e.kind == EventKind::SuggestionExpand)),
        ("preview", Box::new(|e| e.kind == EventKind::SuggestionPreview)),
        (
            "partial accept",
            Box::new(|e| {
                e.kind == EventKind::PreviewAccept
                    && e.payload["hunk_count"].as_u64() < e.payload["total_hunks"].as_u64()
                    && e.payload["hunk_count"].as_u64() > Some(0)
            }),
        ),
        ("run error", Box::new(|e| e.kind == EventKind::Run && e.payload["is_error"] == true)),
        ("debug batch", Box::new(|e| e.kind == EventKind::SuggestionShown && origin(e) == "proactive_debug")),
    ];
    for (name, pred) in &steps {
        at = position(pred.as_ref(), at).ok_or_else(|| format!("no `{name}` step in order"))?;
    }

    let errors: Vec<_> = events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::ProviderError | EventKind::ParseFailure))
        .map(|e| e.to_line())
        .collect();
    ensure(errors.is_empty(), || errors.join("\n"))?;
    ensure(!d.session().is_read_only(), || "session went read-only".into())?;

    let log = parse_log(&sink.to_jsonl());
    let report = audit_session(&log, d.session());
    ensure(report.is_clean(), || report.problems.join("\n"))
}

// ---- 9

fn c9_schedule() -> Check {
    let registry = TaskRegistry::with_builtins();
    let mut variants = Vec::new();
    for seed in 0..1_000u64 {
        let s = assign_condition(seed, &registry).map_err(|e| e.to_string())?;
        let [a, b] = &s.blocks;
        ensure(a.task_types[0] == b.task_types[0] && a.task_types[1] == b.task_types[1], || {
            format!("seed {seed}: task types not mirrored: {s:?}")
        })?;
        ensure(a.task_types[0] != a.task_types[1], || format!("seed {seed}: block mixes one type only"))?;
        for (i, block) in s.blocks.iter().enumerate() {
            for (t, ty) in block.tasks.iter().zip(block.task_types) {
                let fixture = registry.get(t).map_err(|e| e.to_string())?;
                ensure(fixture.task_type == ty, || format!("seed {seed} block {i}: {t} is not {ty:?}"))?;
            }
        }
        let all: BTreeSet<_> = a.tasks.iter().chain(&b.tasks).collect();
        ensure(all.len() == 4, || format!("seed {seed}: repeated task"))?;
        let conds = [a.condition.as_str(), b.condition.as_str()];
        ensure(
            conds.contains(&BASELINE) && conds.contains(&s.proactive_variant.as_str()),
            || format!("seed {seed}: conditions {conds:?}"),
        )?;
        variants.push(s.proactive_variant);
    }
    let ideal = 99 / PROACTIVE_VARIANTS.len() as i64;
    for start in 0..=(variants.len() - 99) {
        for v in PROACTIVE_VARIANTS {
            let n = variants[start..start + 99].iter().filter(|x| *x == v).count() as i64;
            ensure((n - ideal).abs() <= 1, || format!("seeds {start}..{}: {v} assigned {n} times", start + 99))?;
        }
    }
    Ok(())
}
