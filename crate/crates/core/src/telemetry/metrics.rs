//! Per-task interaction counts aggregated per condition.
//!
//! A task runs from its `task_start` to the next `task_start` in the same
//! session; events after a `task_submit` still belong to the task before
//! them. A session without any `task_start` counts as one task.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_log, EventKind, TelemetryEvent};
use crate::suggestion::SuggestionCategory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Expands,
    Copies,
    Previews,
    ManualRequests,
    Accepts,
    Deletes,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Expands,
        Metric::Copies,
        Metric::Previews,
        Metric::ManualRequests,
        Metric::Accepts,
        Metric::Deletes,
    ];

    pub fn event_kind(self) -> EventKind {
        match self {
            Metric::Expands => EventKind::SuggestionExpand,
            Metric::Copies => EventKind::SuggestionCopy,
            Metric::Previews => EventKind::SuggestionPreview,
            Metric::ManualRequests => EventKind::SuggestionRequest,
            Metric::Accepts => EventKind::SuggestionAccept,
            Metric::Deletes => EventKind::SuggestionDelete,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Expands => "expands",
            Metric::Copies => "copies",
            Metric::Previews => "previews",
            Metric::ManualRequests => "manual_requests",
            Metric::Accepts => "accepts",
            Metric::Deletes => "deletes",
        }
    }

    fn from_kind(kind: EventKind) -> Option<Metric> {
        Self::ALL.into_iter().find(|m| m.event_kind() == kind)
    }
}

/// How per-task counts are averaged.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Mean of per-participant means; n is the participant count.
    #[default]
    Participant,
    /// Mean over all tasks; n is the task count.
    Task,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MetricsOptions {
    pub by_condition: bool,
    pub weighting: Weighting,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation over √n; undefined below two samples.
    pub se: Option<f64>,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: 0.0, se: None, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let se = (n > 1).then(|| {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            var.sqrt() / (n as f64).sqrt()
        });
        Self { mean, se, n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupMetrics {
    /// Condition name, or `all` when not grouping by condition.
    pub condition: String,
    pub n_participants: usize,
    pub n_tasks: usize,
    pub metrics: BTreeMap<Metric, Summary>,
    pub acceptance_by_category: BTreeMap<SuggestionCategory, u64>,
    pub deletes_by_category: BTreeMap<SuggestionCategory, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParticipantRow {
    pub participant: String,
    pub condition: String,
    pub tasks: usize,
    /// Mean per-task count for each metric.
    pub means: BTreeMap<Metric, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InteractionMetrics {
    pub weighting: Weighting,
    pub groups: Vec<GroupMetrics>,
    pub participants: Vec<ParticipantRow>,
    pub acceptance_by_category: BTreeMap<SuggestionCategory, u64>,
    pub deletes_by_category: BTreeMap<SuggestionCategory, u64>,
    pub malformed_lines: usize,
    /// Events that precede the first `task_start` of a session that has one.
    pub unattributed_events: usize,
}

#[derive(Debug, Clone, Default)]
struct TaskCounts {
    participant: String,
    condition: String,
    counts: BTreeMap<Metric, u64>,
}

fn category_of(e: &TelemetryEvent) -> Option<SuggestionCategory> {
    e.payload
        .get("category")
        .and_then(|c| c.as_str())
        .and_then(SuggestionCategory::parse_lenient)
}

pub fn compute_metrics<P: AsRef<Path>>(paths: &[P], opts: MetricsOptions) -> std::io::Result<InteractionMetrics> {
    let mut events = Vec::new();
    let mut malformed = 0;
    for p in paths {
        let log = read_log(p)?;
        malformed += log.malformed;
        events.extend(log.events);
    }
    Ok(compute_metrics_from_events(&events, malformed, opts))
}

pub fn compute_metrics_from_events(
    events: &[TelemetryEvent],
    malformed_lines: usize,
    opts: MetricsOptions,
) -> InteractionMetrics {
    // sessions in first-seen order, events within a session by seq
    let mut sessions: BTreeMap<&str, Vec<&TelemetryEvent>> = BTreeMap::new();
    for e in events {
        sessions.entry(e.session_id.as_str()).or_default().push(e);
    }

    let mut tasks: Vec<TaskCounts> = Vec::new();
    let mut unattributed = 0;
    let mut accepted: BTreeMap<String, BTreeMap<SuggestionCategory, u64>> = BTreeMap::new();
    let mut deleted: BTreeMap<String, BTreeMap<SuggestionCategory, u64>> = BTreeMap::new();

    for (session_id, mut evs) in sessions {
        evs.sort_by_key(|e| e.seq);
        let participant = evs
            .iter()
            .find(|e| e.kind == EventKind::SessionCreated)
            .and_then(|e| e.payload.get("participant_id"))
            .and_then(|p| p.as_str())
            .filter(|p| !p.is_empty())
            .unwrap_or(session_id)
            .to_string();
        let has_tasks = evs.iter().any(|e| e.kind == EventKind::TaskStart);
        let mut current: Option<usize> = None;
        if !has_tasks && !evs.is_empty() {
            tasks.push(TaskCounts {
                participant: participant.clone(),
                condition: evs[0].condition_name.clone(),
                ..Default::default()
            });
            current = Some(tasks.len() - 1);
        }
        for e in evs {
            if e.kind == EventKind::TaskStart {
                tasks.push(TaskCounts {
                    participant: participant.clone(),
                    condition: e.condition_name.clone(),
                    ..Default::default()
                });
                current = Some(tasks.len() - 1);
                continue;
            }
            let Some(t) = current else {
                unattributed += 1;
                continue;
            };
            let Some(metric) = Metric::from_kind(e.kind) else { continue };
            *tasks[t].counts.entry(metric).or_default() += 1;
            let group = group_name(&tasks[t].condition, opts);
            let by_cat = match metric {
                Metric::Accepts => &mut accepted,
                Metric::Deletes => &mut deleted,
                _ => continue,
            };
            if let Some(c) = category_of(e) {
                *by_cat.entry(group).or_default().entry(c).or_default() += 1;
            }
        }
    }

    let mut group_names: BTreeSet<String> = tasks.iter().map(|t| group_name(&t.condition, opts)).collect();
    if !opts.by_condition {
        group_names.insert("all".into());
    }

    let mut participants = Vec::new();
    let mut groups = Vec::new();
    for g in group_names {
        let in_group: Vec<&TaskCounts> = tasks
            .iter()
            .filter(|t| group_name(&t.condition, opts) == g)
            .collect();
        let people: BTreeSet<&str> = in_group.iter().map(|t| t.participant.as_str()).collect();
        let mut rows = Vec::new();
        for p in &people {
            let theirs: Vec<_> = in_group.iter().filter(|t| t.participant == *p).collect();
            let means = Metric::ALL
                .into_iter()
                .map(|m| {
                    let total: u64 = theirs.iter().map(|t| t.counts.get(&m).copied().unwrap_or(0)).sum();
                    (m, total as f64 / theirs.len() as f64)
                })
                .collect();
            rows.push(ParticipantRow {
                participant: p.to_string(),
                condition: g.clone(),
                tasks: theirs.len(),
                means,
            });
        }
        let metrics = Metric::ALL
            .into_iter()
            .map(|m| {
                let values: Vec<f64> = match opts.weighting {
                    Weighting::Participant => rows.iter().map(|r| r.means[&m]).collect(),
                    Weighting::Task => in_group
                        .iter()
                        .map(|t| t.counts.get(&m).copied().unwrap_or(0) as f64)
                        .collect(),
                };
                (m, Summary::of(&values))
            })
            .collect();
        groups.push(GroupMetrics {
            n_participants: people.len(),
            n_tasks: in_group.len(),
            metrics,
            acceptance_by_category: accepted.get(&g).cloned().unwrap_or_default(),
            deletes_by_category: deleted.get(&g).cloned().unwrap_or_default(),
            condition: g,
        });
        participants.extend(rows);
    }

    let total = |m: &BTreeMap<String, BTreeMap<SuggestionCategory, u64>>| {
        let mut out: BTreeMap<SuggestionCategory, u64> = BTreeMap::new();
        for per in m.values() {
            for (c, n) in per {
                *out.entry(*c).or_default() += n;
            }
        }
        out
    };
    InteractionMetrics {
        weighting: opts.weighting,
        acceptance_by_category: total(&accepted),
        deletes_by_category: total(&deleted),
        groups,
        participants,
        malformed_lines,
        unattributed_events: unattributed,
    }
}

fn group_name(condition: &str, opts: MetricsOptions) -> String {
    if opts.by_condition {
        condition.to_string()
    } else {
        "all".to_string()
    }
}

fn fmt_se(se: Option<f64>) -> String {
    se.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))
}

pub fn render_table(m: &InteractionMetrics, by_category: bool) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<16} {:<20} {:>8} {:>8} {:>5}", "metric", "condition", "mean", "se", "n");
    for g in &m.groups {
        for (metric, s) in &g.metrics {
            let _ = writeln!(
                out,
                "{:<16} {:<20} {:>8.2} {:>8} {:>5}",
                metric.name(),
                g.condition,
                s.mean,
                fmt_se(s.se),
                s.n
            );
        }
    }
    if by_category {
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<28} {:<20} {:>8} {:>8}", "category", "condition", "accepts", "deletes");
        for g in &m.groups {
            let cats: BTreeSet<_> = g
                .acceptance_by_category
                .keys()
                .chain(g.deletes_by_category.keys())
                .collect();
            for c in cats {
                let _ = writeln!(
                    out,
                    "{:<28} {:<20} {:>8} {:>8}",
                    c.key(),
                    g.condition,
                    g.acceptance_by_category.get(c).copied().unwrap_or(0),
                    g.deletes_by_category.get(c).copied().unwrap_or(0)
                );
            }
        }
    }
    if m.malformed_lines > 0 {
        let _ = writeln!(out, "\nskipped {} malformed line(s)", m.malformed_lines);
    }
    out
}

pub fn render_csv(m: &InteractionMetrics, by_category: bool) -> String {
    let mut out = String::from("section,metric,condition,participant,mean,se,n\n");
    for g in &m.groups {
        for (metric, s) in &g.metrics {
            let se = s.se.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(out, "summary,{},{},,{},{},{}", metric.name(), g.condition, s.mean, se, s.n);
        }
    }
    for p in &m.participants {
        for (metric, mean) in &p.means {
            let _ = writeln!(
                out,
                "participant,{},{},{},{},,{}",
                metric.name(),
                p.condition,
                p.participant,
                mean,
                p.tasks
            );
        }
    }
    if by_category {
        for g in &m.groups {
            for (c, n) in &g.acceptance_by_category {
                let _ = writeln!(out, "accepts_by_category,{},{},,{},,", c.key(), g.condition, n);
            }
            for (c, n) in &g.deletes_by_category {
                let _ = writeln!(out, "deletes_by_category,{},{},,{},,", c.key(), g.condition, n);
            }
        }
    }
    out
}
