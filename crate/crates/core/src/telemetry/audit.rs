//! Completeness checks over a session log, optionally against the live
//! session that wrote it.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::Value;

use super::{EventKind, LogContents, TelemetryEvent, SCHEMA_VERSION};
use crate::session::Session;
use crate::suggestion::SuggestionState;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AuditReport {
    pub events: usize,
    pub problems: Vec<String>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.problems.is_empty()
    }
}

/// What the log says the session looks like at its end.
#[derive(Debug, Clone, Default)]
struct Reconstructed {
    docs: BTreeMap<String, (u64, String)>,
    chat_len: usize,
    cards: BTreeMap<String, SuggestionState>,
    current_batch: Vec<String>,
}

fn ids(v: &Value) -> Vec<String> {
    v.as_array()
        .map(|a| a.iter().filter_map(|x| x.as_str().map(str::to_string)).collect())
        .unwrap_or_default()
}

fn target(ev: &TelemetryEvent) -> Option<&str> {
    ev.payload.get("target").and_then(Value::as_str)
}

fn check_session(events: &[TelemetryEvent], problems: &mut Vec<String>) -> Reconstructed {
    let mut r = Reconstructed::default();
    let mut say = |msg: String| problems.push(msg);
    let Some(first) = events.first() else { return r };
    let sid = &first.session_id;
    if first.kind != EventKind::SessionCreated {
        say(format!("{sid}: first event is {:?}, not session_created", first.kind));
    }

    let mut outcomes: BTreeMap<u64, usize> = BTreeMap::new();
    let mut generated: BTreeSet<u64> = BTreeSet::new();
    let mut resolved: BTreeMap<u64, usize> = BTreeMap::new();

    for (i, ev) in events.iter().enumerate() {
        if ev.seq != i as u64 + 1 {
            say(format!("{sid}: event {} has seq {}", i + 1, ev.seq));
        }
        if i > 0 && ev.ts_ms < events[i - 1].ts_ms {
            say(format!("{sid}: seq {} goes back in time", ev.seq));
        }
        let p = &ev.payload;
        let sug = || p.get("suggestion_id").and_then(Value::as_str).unwrap_or("").to_string();
        let transition = |r: &mut Reconstructed, id: String, to: SuggestionState, say: &mut dyn FnMut(String)| {
            match r.cards.get(&id).copied() {
                None => say(format!("{sid}: seq {} acts on unknown suggestion {id}", ev.seq)),
                Some(from) if !from.can_transition(to) => {
                    say(format!("{sid}: seq {} moves {id} from {from:?} to {to:?}", ev.seq))
                }
                Some(_) => {
                    r.cards.insert(id, to);
                }
            }
        };
        match ev.kind {
            EventKind::CodeUpdate => {
                let doc = p.get("doc_id").and_then(Value::as_str).unwrap_or("").to_string();
                let version = p.get("version").and_then(Value::as_u64).unwrap_or(0);
                let text = p.get("text").and_then(Value::as_str);
                let expected = r.docs.get(&doc).map_or(1, |(v, _)| v + 1);
                if version != expected {
                    say(format!("{sid}: {doc} jumps to version {version}, expected {expected}"));
                }
                match text {
                    Some(t) => {
                        r.docs.insert(doc, (version, t.to_string()));
                    }
                    None => say(format!("{sid}: seq {} snapshot has no text", ev.seq)),
                }
            }
            EventKind::ChatSend | EventKind::ChatResponse | EventKind::SuggestionAccept => r.chat_len += 1,
            EventKind::ProviderError if target(ev) == Some("chat") => r.chat_len += 1,
            EventKind::ChatClear => {
                r.chat_len = 0;
                for id in ids(&p["suggestion_ids"]) {
                    transition(&mut r, id, SuggestionState::Deleted, &mut say);
                }
            }
            EventKind::SuggestionsClear => {
                let cleared = ids(&p["suggestion_ids"]);
                for id in &cleared {
                    if r.cards.get(id).is_some_and(|s| s.is_terminal()) {
                        say(format!("{sid}: seq {} clears finished suggestion {id}", ev.seq));
                    }
                    r.cards.insert(id.clone(), SuggestionState::Deleted);
                }
                for id in &r.current_batch {
                    if !r.cards[id].is_terminal() {
                        say(format!("{sid}: seq {} leaves {id} live after a clear", ev.seq));
                    }
                }
            }
            EventKind::SuggestionShown => {
                let token = p.get("token").and_then(Value::as_u64).unwrap_or(0);
                *resolved.entry(token).or_default() += 1;
                r.current_batch.clear();
                for card in p["suggestions"].as_array().into_iter().flatten() {
                    let id = card["suggestion_id"].as_str().unwrap_or("").to_string();
                    if r.cards.insert(id.clone(), SuggestionState::Collapsed).is_some() {
                        say(format!("{sid}: suggestion {id} shown twice"));
                    }
                    r.current_batch.push(id);
                }
            }
            EventKind::GenerationDiscarded => {
                let token = p.get("token").and_then(Value::as_u64).unwrap_or(0);
                *resolved.entry(token).or_default() += 1;
            }
            EventKind::SuggestionExpand => transition(&mut r, sug(), SuggestionState::Expanded, &mut say),
            EventKind::SuggestionCollapse => transition(&mut r, sug(), SuggestionState::Collapsed, &mut say),
            EventKind::SuggestionDelete => transition(&mut r, sug(), SuggestionState::Deleted, &mut say),
            _ => {}
        }
        if ev.kind == EventKind::SuggestionAccept {
            transition(&mut r, sug(), SuggestionState::Accepted, &mut say);
        }
        let outcome = match ev.kind {
            EventKind::SuggestionsGenerated => true,
            EventKind::ParseFailure | EventKind::ProviderError => target(ev) == Some("suggestions"),
            _ => false,
        };
        if outcome {
            let token = p.get("token").and_then(Value::as_u64).unwrap_or(0);
            *outcomes.entry(token).or_default() += 1;
            if ev.kind == EventKind::SuggestionsGenerated {
                generated.insert(token);
            }
        }
    }

    for (token, n) in &outcomes {
        if *n != 1 {
            say(format!("{sid}: generation {token} has {n} outcomes"));
        }
    }
    for token in &generated {
        match resolved.get(token) {
            Some(1) => {}
            Some(n) => say(format!("{sid}: generation {token} was shown or discarded {n} times")),
            None => say(format!("{sid}: generation {token} was neither shown nor discarded")),
        }
    }
    for token in resolved.keys() {
        if !generated.contains(token) {
            say(format!("{sid}: batch {token} shown or discarded without being generated"));
        }
    }
    r
}

/// Structural checks on every session in a log.
pub fn audit_log(log: &LogContents) -> AuditReport {
    let mut problems = Vec::new();
    match log.schema_version {
        Some(v) if v == u64::from(SCHEMA_VERSION) => {}
        Some(v) => problems.push(format!("schema version {v}, expected {SCHEMA_VERSION}")),
        None => problems.push("missing schema header".into()),
    }
    if log.malformed > 0 {
        problems.push(format!("{} malformed lines", log.malformed));
    }
    let mut by_session: BTreeMap<&str, Vec<TelemetryEvent>> = BTreeMap::new();
    for ev in &log.events {
        by_session.entry(ev.session_id.as_str()).or_default().push(ev.clone());
    }
    for events in by_session.values() {
        check_session(events, &mut problems);
    }
    AuditReport {
        events: log.events.len(),
        problems,
    }
}

/// [`audit_log`] plus a comparison of the log's end state with `session`.
pub fn audit_session(log: &LogContents, session: &Session) -> AuditReport {
    let mut report = audit_log(log);
    let events: Vec<_> = log
        .events
        .iter()
        .filter(|e| &e.session_id == session.session_id())
        .cloned()
        .collect();
    let mut scratch = Vec::new();
    let r = check_session(&events, &mut scratch);
    let problems = &mut report.problems;

    for doc in session.documents() {
        match r.docs.get(doc.doc_id.as_str()) {
            Some((v, text)) if *v == doc.version && *text == doc.text => {}
            Some((v, _)) => problems.push(format!(
                "{}: last snapshot is version {v}, session has version {}",
                doc.doc_id, doc.version
            )),
            None => problems.push(format!("{}: no snapshot logged", doc.doc_id)),
        }
    }
    if r.chat_len != session.chat().len() {
        problems.push(format!(
            "log implies {} chat messages, session has {}",
            r.chat_len,
            session.chat().len()
        ));
    }
    for card in session.suggestions() {
        let logged = r.cards.get(card.suggestion_id.as_str());
        if logged != Some(&card.state) {
            problems.push(format!(
                "suggestion {} is {:?} but the log says {:?}",
                card.suggestion_id, card.state, logged
            ));
        }
    }
    let live: Vec<_> = session.suggestions().iter().map(|s| s.suggestion_id.to_string()).collect();
    if live != r.current_batch {
        problems.push(format!("current batch {live:?} differs from logged {:?}", r.current_batch));
    }
    report
}
