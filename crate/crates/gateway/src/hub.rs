//! Live sessions. Each one runs in its own task that owns the [`Session`]
//! and applies requests, clock ticks and provider/runner completions one at
//! a time, in arrival order.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use tokio::sync::{broadcast, mpsc, oneshot};
use tokio::time::MissedTickBehavior;

use proactive_core::clock::{Clock, Millis};
use proactive_core::condition::{ConditionRef, ConditionRegistry};
use proactive_core::error::SessionError;
use proactive_core::ids::SessionId;
use proactive_core::provider::Provider;
use proactive_core::runner::{CodeRunner, RunnerError};
use proactive_core::session::{Completion, Effect, PushFrame, Session, SessionInit, SessionSnapshot};
use proactive_core::tasks::{TaskFixture, TaskRegistry};

use crate::error::ApiError;
use crate::logs::LogStore;

const COMMAND_QUEUE: usize = 64;
const FRAME_BUFFER: usize = 256;

type Op = Box<dyn FnOnce(&mut Session, Millis) + Send>;

enum Command {
    Op(Op),
    Subscribe(oneshot::Sender<(PushFrame, broadcast::Receiver<PushFrame>)>),
}

/// Handle to one running session.
#[derive(Clone)]
pub struct SessionHandle {
    pub session_id: String,
    pub log_path: PathBuf,
    tx: mpsc::Sender<Command>,
}

impl SessionHandle {
    /// Run `f` on the session's own task and wait for the result.
    pub async fn call<R, F>(&self, f: F) -> Result<R, ApiError>
    where
        R: Send + 'static,
        F: FnOnce(&mut Session, Millis) -> Result<R, SessionError> + Send + 'static,
    {
        let (tx, rx) = oneshot::channel();
        let op: Op = Box::new(move |s, ts| {
            let _ = tx.send(f(s, ts));
        });
        self.tx
            .send(Command::Op(op))
            .await
            .map_err(|_| ApiError::session_closed())?;
        rx.await.map_err(|_| ApiError::session_closed())?.map_err(ApiError::from)
    }

    /// A notice with the current state, then every frame emitted after it.
    pub async fn subscribe(&self) -> Result<(PushFrame, broadcast::Receiver<PushFrame>), ApiError> {
        let (tx, rx) = oneshot::channel();
        self.tx
            .send(Command::Subscribe(tx))
            .await
            .map_err(|_| ApiError::session_closed())?;
        rx.await.map_err(|_| ApiError::session_closed())
    }
}

#[derive(Debug, Clone, Default, serde::Deserialize)]
pub struct NewSession {
    pub condition: Option<ConditionRef>,
    #[serde(default)]
    pub task: Option<String>,
    #[serde(default)]
    pub participant_id: Option<String>,
    /// Overrides the task's starter code.
    #[serde(default)]
    pub starter_code: Option<String>,
}

pub struct Hub {
    sessions: RwLock<HashMap<String, SessionHandle>>,
    pub conditions: ConditionRegistry,
    pub tasks: TaskRegistry,
    provider: Arc<dyn Provider>,
    runner: Option<Arc<dyn CodeRunner>>,
    logs: LogStore,
    clock: Arc<dyn Clock>,
    tick_interval: Duration,
    counter: AtomicU64,
    instance: String,
}

impl Hub {
    pub fn new(
        conditions: ConditionRegistry,
        tasks: TaskRegistry,
        provider: Arc<dyn Provider>,
        runner: Option<Arc<dyn CodeRunner>>,
        logs: LogStore,
        clock: Arc<dyn Clock>,
        tick_interval: Duration,
    ) -> Self {
        // distinguishes ids across restarts that share a telemetry directory
        let instance = format!("{:x}", clock.now_ms());
        Self {
            sessions: RwLock::new(HashMap::new()),
            conditions,
            tasks,
            provider,
            runner,
            logs,
            clock,
            tick_interval,
            counter: AtomicU64::new(0),
            instance,
        }
    }

    pub fn has_runner(&self) -> bool {
        self.runner.is_some()
    }

    pub fn get(&self, id: &str) -> Result<SessionHandle, ApiError> {
        self.sessions
            .read()
            .expect("session map")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::session_not_found(id))
    }

    /// Stop a session. Its log stays on disk.
    pub fn close(&self, id: &str) -> Result<(), ApiError> {
        self.sessions
            .write()
            .expect("session map")
            .remove(id)
            .map(|_| ())
            .ok_or_else(|| ApiError::session_not_found(id))
    }

    /// Logged events of a running or closed session.
    pub fn log_text(&self, id: &str) -> Result<String, ApiError> {
        let path = match self.get(id) {
            Ok(h) => h.log_path,
            Err(e) if !valid_id(id) => return Err(e),
            Err(_) => self.logs.path_for(id),
        };
        self.logs.session_text(&path, id)
    }

    pub fn task(&self, id: &str) -> Result<&TaskFixture, ApiError> {
        Ok(self.tasks.get(id)?)
    }

    pub fn create(&self, req: NewSession) -> Result<(SessionHandle, SessionSnapshot), ApiError> {
        let condition = self
            .conditions
            .resolve(&req.condition.unwrap_or_else(|| ConditionRef::Named("baseline".into())))?;
        let task = req.task.as_deref().map(|t| self.tasks.get(t)).transpose()?;
        let mut init = SessionInit::new(condition);
        init.task_id = task.map(|t| t.task_id.clone());
        init.starter_code = req
            .starter_code
            .or_else(|| task.map(|t| t.starter_code.clone()))
            .unwrap_or_default();
        init.participant_id = req.participant_id;

        let n = self.counter.fetch_add(1, Ordering::SeqCst) + 1;
        let id = format!("{}{}-{n}", SessionId::PREFIX, self.instance);
        let (sink, log_path) = self.logs.sink_for(&id)?;
        let now = self.clock.now_ms();
        let session = Session::create(SessionId::from(id.as_str()), init, sink, now)?;
        let snapshot = session.snapshot();

        let (tx, rx) = mpsc::channel(COMMAND_QUEUE);
        let handle = SessionHandle {
            session_id: id.clone(),
            log_path,
            tx,
        };
        let actor = Actor {
            session,
            frames: broadcast::channel(FRAME_BUFFER).0,
            provider: self.provider.clone(),
            runner: self.runner.clone(),
            clock: self.clock.clone(),
            last_ts: now,
        };
        tokio::spawn(actor.run(rx, self.tick_interval));
        self.sessions.write().expect("session map").insert(id, handle.clone());
        Ok((handle, snapshot))
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

struct Actor {
    session: Session,
    frames: broadcast::Sender<PushFrame>,
    provider: Arc<dyn Provider>,
    runner: Option<Arc<dyn CodeRunner>>,
    clock: Arc<dyn Clock>,
    last_ts: Millis,
}

impl Actor {
    /// Wall time, never earlier than anything already applied.
    fn now(&mut self) -> Millis {
        self.last_ts = self.clock.now_ms().max(self.last_ts);
        self.last_ts
    }

    async fn run(mut self, mut rx: mpsc::Receiver<Command>, tick_every: Duration) {
        let (done_tx, mut done_rx) = mpsc::unbounded_channel::<Completion>();
        let mut ticker = tokio::time::interval(tick_every);
        ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
        let id = self.session.session_id().to_string();

        loop {
            tokio::select! {
                cmd = rx.recv() => match cmd {
                    None => break,
                    Some(Command::Op(op)) => {
                        let ts = self.now();
                        op(&mut self.session, ts);
                    }
                    Some(Command::Subscribe(reply)) => {
                        let _ = reply.send((self.session.state_notice(), self.frames.subscribe()));
                    }
                },
                Some(done) = done_rx.recv() => {
                    let ts = self.now();
                    if let Err(e) = self.session.complete(done, ts) {
                        tracing::warn!(session = %id, "completion rejected: {e}");
                    }
                }
                _ = ticker.tick() => {
                    let ts = self.now();
                    if let Err(e) = self.session.tick(ts) {
                        tracing::warn!(session = %id, "tick rejected: {e}");
                    }
                }
            }
            self.dispatch(&done_tx);
        }
        tracing::debug!(session = %id, "session closed");
    }

    fn dispatch(&mut self, done: &mpsc::UnboundedSender<Completion>) {
        for effect in self.session.take_effects() {
            let done = done.clone();
            let provider = self.provider.clone();
            match effect {
                Effect::Push(frame) => {
                    // no subscribers is fine
                    let _ = self.frames.send(frame);
                }
                Effect::Generate { token, prompt } => {
                    tokio::spawn(async move {
                        let result = provider.complete(&prompt).await;
                        let _ = done.send(Completion::Generation { token, result });
                    });
                }
                Effect::Chat { request_id, prompt } => {
                    tokio::spawn(async move {
                        let result = provider.complete(&prompt).await;
                        let _ = done.send(Completion::Chat { request_id, result });
                    });
                }
                Effect::Preview { preview_id, prompt } => {
                    tokio::spawn(async move {
                        let result = provider.complete(&prompt).await;
                        let _ = done.send(Completion::Preview { preview_id, result });
                    });
                }
                Effect::Run { run_id, code } => {
                    let runner = self.runner.clone();
                    tokio::spawn(async move {
                        let result = match runner {
                            Some(r) => r.run(&code).await,
                            None => Err(RunnerError("runner not configured".into())),
                        };
                        let _ = done.send(Completion::Run { run_id, result });
                    });
                }
            }
        }
    }
}
