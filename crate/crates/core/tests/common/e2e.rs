//! A three-minute scripted session under suggest_preview, on a virtual clock.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use proactive_core::condition::ConditionConfig;
use proactive_core::driver::VirtualDriver;
use proactive_core::provider::ScriptedProvider;
use proactive_core::runner::{RunResult, ScriptedRun, ScriptedRunner};
use proactive_core::session::{Session, SessionInit};
use proactive_core::ids::SuggestionId;
use proactive_core::suggestion::{SuggestionCategory, SuggestionOrigin};
use proactive_core::tasks::TaskRegistry;
use proactive_core::telemetry::EventSink;

pub const SESSION_ID: &str = "session-e2e";
pub const END_MS: i64 = 180_000;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/e2e")
}

pub fn provider() -> ScriptedProvider {
    ScriptedProvider::from_dir(fixture_dir()).expect("e2e fixtures load")
}

fn runner() -> ScriptedRunner {
    ScriptedRunner::new([
        ScriptedRun {
            result: RunResult {
                stdout: "[ ] Write report (work, High) due 2030-01-15\n".into(),
                stderr: "Traceback (most recent call last):\n  File \"main.py\", line 47, in remove_task\nIndexError: list assignment index out of range\n".into(),
                exit_status: 1,
                is_error: true,
                timed_out: false,
            },
            duration_ms: 400,
        },
        ScriptedRun {
            result: RunResult {
                stdout: "[ ] Write report (work, High) due 2030-01-15\n[x] Buy milk (home, Low)\n".into(),
                stderr: String::new(),
                exit_status: 0,
                is_error: false,
                timed_out: false,
            },
            duration_ms: 350,
        },
    ])
}

fn err(step: &str) -> impl Fn(proactive_core::error::SessionError) -> String + '_ {
    move |e| format!("{step}: {e}")
}

fn find(d: &VirtualDriver, pred: impl Fn(&proactive_core::suggestion::Suggestion) -> bool) -> Option<SuggestionId> {
    d.session()
        .visible_suggestions()
        .find(|s| pred(s))
        .map(|s| s.suggestion_id.clone())
}

/// Drive the whole scenario; any operation error is returned.
pub fn run(sink: Arc<dyn EventSink>) -> Result<VirtualDriver, String> {
    let registry = TaskRegistry::with_builtins();
    let task = registry.get("todo_list").map_err(|e| e.to_string())?;
    let mut init = SessionInit::new(ConditionConfig::suggest_preview());
    init.task_id = Some(task.task_id.clone());
    init.starter_code = task.starter_code.clone();
    init.participant_id = Some("p01".into());
    let session = Session::create(SESSION_ID.into(), init, sink, 0).map_err(err("create"))?;
    let mut d = VirtualDriver::new(session, Arc::new(provider()), Some(Arc::new(runner())));
    let doc = d.session().primary_doc().doc_id.clone();
    let starter = task.starter_code.clone();

    // a short typing burst at the top of the file
    let mut text = starter.clone();
    for (i, word) in ["# TODO", " sort", " by", " priority"].iter().enumerate() {
        text = if i == 0 { format!("{word}\n{starter}") } else { text.replacen('\n', &format!("{word}\n"), 1) };
        let t = text.clone();
        d.act(1_000 + i as i64 * 1_000, |s, ts| s.apply_edit(&doc, &t, ts)).map_err(err("edit"))?;
    }

    // idle: the first proactive batch arrives
    d.advance_to(12_000).map_err(err("advance"))?;
    let first = find(&d, |s| s.origin == SuggestionOrigin::ProactiveStandard).ok_or("no proactive batch by 12 s")?;
    d.act(12_000, |s, ts| s.expand_suggestion(&first, ts)).map_err(err("expand"))?;
    let preview = d.act(13_000, |s, ts| s.request_preview(&first, ts)).map_err(err("preview"))?;
    d.advance_to(16_000).map_err(err("advance"))?;
    let hunks = d.session().preview(&preview).map(|p| p.hunks.len()).ok_or("preview not ready")?;
    if hunks < 2 {
        return Err(format!("preview has {hunks} hunks"));
    }
    d.act(16_000, |s, ts| s.accept_preview(&preview, Some(&[1]), None, ts)).map_err(err("accept preview"))?;

    d.act(20_000, |s, ts| s.chat_typing(ts)).map_err(err("chat typing"))?;
    d.act(21_000, |s, ts| s.post_chat("why does remove_task crash on the last task?", ts)).map_err(err("chat"))?;

    // break the file and run it
    let broken = format!("{}\ntodo.remove_task(\"Buy milk\")\n", d.session().primary_doc().text.trim_end());
    d.act(30_000, |s, ts| s.apply_edit(&doc, &broken, ts)).map_err(err("edit"))?;
    d.act(32_000, |s, ts| s.run_code(&doc, ts)).map_err(err("run"))?;
    d.advance_to(35_000).map_err(err("advance"))?;
    let fix = find(&d, |s| s.origin == SuggestionOrigin::ProactiveDebug && s.category == SuggestionCategory::DebugRuntime)
        .ok_or("no debug batch after the failing run")?;
    let other = find(&d, |s| s.origin == SuggestionOrigin::ProactiveDebug && s.category == SuggestionCategory::ExplainCode)
        .ok_or("debug batch lacks an explanation card")?;
    d.act(35_000, |s, ts| s.expand_suggestion(&fix, ts)).map_err(err("expand"))?;
    d.act(36_000, |s, ts| s.accept_suggestion(&fix, ts)).map_err(err("accept"))?;
    d.act(37_000, |s, ts| s.expand_suggestion(&other, ts)).map_err(err("expand"))?;
    d.act(37_500, |s, ts| s.copy_suggestion(&other, ts)).map_err(err("copy"))?;
    d.act(38_000, |s, ts| s.delete_suggestion(&other, ts)).map_err(err("delete"))?;

    let fixed = d.session().primary_doc().text.replace("del self.tasks[i + 1]", "del self.tasks[i]");
    d.act(60_000, |s, ts| s.apply_edit(&doc, &fixed, ts)).map_err(err("edit"))?;
    d.act(62_000, |s, ts| s.run_code(&doc, ts)).map_err(err("run"))?;

    d.act(100_000, |s, ts| s.request_suggestions(ts)).map_err(err("manual request"))?;
    d.act(120_000, |s, ts| s.clear_suggestions(ts)).map_err(err("clear"))?;
    d.act(150_000, |s, ts| s.post_chat("does it work now?", ts)).map_err(err("chat"))?;
    d.act(175_000, |s, ts| s.submit_task(ts)).map_err(err("submit"))?;
    d.advance_to(END_MS).map_err(err("advance"))?;
    Ok(d)
}
