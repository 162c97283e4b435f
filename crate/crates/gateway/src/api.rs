//! HTTP routes. Bodies are JSON; errors come back as `{code, message}`.

use std::convert::Infallible;
use std::sync::Arc;

use axum::async_trait;
use axum::body::Bytes;
use axum::extract::{FromRequest, Path, Request, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio_stream::wrappers::BroadcastStream;

use proactive_core::condition::ConditionConfig;
use proactive_core::ids::{DocId, PreviewId, SuggestionId};
use proactive_core::session::{PushFrame, SessionSnapshot};
use proactive_core::tasks::TaskFixture;

use crate::error::{ApiError, ErrorCode};
use crate::hub::{Hub, NewSession};

pub type AppState = Arc<Hub>;

pub fn router(hub: AppState) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/conditions", get(list_conditions))
        .route("/tasks", get(list_tasks))
        .route("/sessions", post(create_session))
        .route("/sessions/:id", get(get_session).delete(close_session))
        .route("/sessions/:id/edits", post(edit))
        .route("/sessions/:id/chat", post(chat))
        .route("/sessions/:id/chat/typing", post(chat_typing))
        .route("/sessions/:id/chat/clear", post(chat_clear))
        .route("/sessions/:id/suggestions/request", post(request_suggestions))
        .route("/sessions/:id/suggestions/clear", post(clear_suggestions))
        .route("/sessions/:id/suggestions/:sid/:action", post(suggestion_action))
        .route("/sessions/:id/previews/:pid/accept", post(accept_preview))
        .route("/sessions/:id/previews/:pid/hide", post(hide_preview))
        .route("/sessions/:id/run", post(run))
        .route("/sessions/:id/tasks/start", post(start_task))
        .route("/sessions/:id/tasks/submit", post(submit_task))
        .route("/sessions/:id/stream", get(stream_frames))
        .route("/sessions/:id/telemetry", get(telemetry))
        .with_state(hub)
}

/// JSON body whose rejection is an [`ApiError`]. An empty body reads as `{}`.
pub struct Body<T>(pub T);

#[async_trait]
impl<S, T> FromRequest<S> for Body<T>
where
    S: Send + Sync,
    T: DeserializeOwned,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::new(ErrorCode::Validation, e.body_text()))?;
        let bytes: &[u8] = if bytes.iter().all(u8::is_ascii_whitespace) { b"{}" } else { &bytes };
        serde_json::from_slice(bytes)
            .map(Body)
            .map_err(|e| ApiError::new(ErrorCode::Validation, format!("bad request body: {e}")))
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn list_conditions(State(hub): State<AppState>) -> Json<Vec<ConditionConfig>> {
    Json(hub.conditions.iter().cloned().collect())
}

#[derive(Serialize)]
struct TaskSummary<'a> {
    task_id: &'a str,
    title: &'a str,
    task_type: proactive_core::tasks::TaskType,
    description: &'a str,
}

async fn list_tasks(State(hub): State<AppState>) -> Json<Value> {
    let tasks: Vec<_> = hub
        .tasks
        .iter()
        .map(|t| TaskSummary {
            task_id: &t.task_id,
            title: &t.title,
            task_type: t.task_type,
            description: &t.description,
        })
        .collect();
    Json(json!(tasks))
}

#[derive(Serialize)]
struct SessionDescriptor {
    #[serde(flatten)]
    snapshot: SessionSnapshot,
    task: Option<TaskFixture>,
    stream_url: String,
}

async fn create_session(State(hub): State<AppState>, Body(req): Body<NewSession>) -> ApiResult<Response> {
    let (handle, snapshot) = hub.create(req)?;
    let task = snapshot.task_id.as_deref().map(|t| hub.task(t)).transpose()?.cloned();
    let body = SessionDescriptor {
        stream_url: format!("/sessions/{}/stream", handle.session_id),
        snapshot,
        task,
    };
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn get_session(State(hub): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionSnapshot>> {
    let snap = hub.get(&id)?.call(|s, _| Ok(s.snapshot())).await?;
    Ok(Json(snap))
}

async fn close_session(State(hub): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    hub.close(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Deserialize)]
struct EditBody {
    doc_id: String,
    text: String,
}

async fn edit(State(hub): State<AppState>, Path(id): Path<String>, Body(b): Body<EditBody>) -> ApiResult<StatusCode> {
    let doc = DocId::from(b.doc_id);
    hub.get(&id)?.call(move |s, ts| s.apply_edit(&doc, b.text, ts)).await?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Deserialize)]
struct ChatBody {
    content: String,
}

async fn chat(State(hub): State<AppState>, Path(id): Path<String>, Body(b): Body<ChatBody>) -> ApiResult<Response> {
    let request_id = hub.get(&id)?.call(move |s, ts| s.post_chat(&b.content, ts)).await?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "request_id": request_id }))).into_response())
}

async fn chat_typing(State(hub): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    hub.get(&id)?.call(|s, ts| s.chat_typing(ts)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn chat_clear(State(hub): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    hub.get(&id)?.call(|s, ts| s.clear_chat(ts)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn request_suggestions(State(hub): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    hub.get(&id)?.call(|s, ts| s.request_suggestions(ts)).await?;
    Ok(StatusCode::ACCEPTED)
}

async fn clear_suggestions(State(hub): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    hub.get(&id)?.call(|s, ts| s.clear_suggestions(ts)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn suggestion_action(
    State(hub): State<AppState>,
    Path((id, sid, action)): Path<(String, String, String)>,
) -> ApiResult<Response> {
    let handle = hub.get(&id)?;
    let sid = SuggestionId::from(sid);
    let done = StatusCode::NO_CONTENT.into_response();
    match action.as_str() {
        "expand" => handle.call(move |s, ts| s.expand_suggestion(&sid, ts)).await.map(|_| done),
        "collapse" => handle.call(move |s, ts| s.collapse_suggestion(&sid, ts)).await.map(|_| done),
        "accept" => handle.call(move |s, ts| s.accept_suggestion(&sid, ts)).await.map(|_| done),
        "delete" => handle.call(move |s, ts| s.delete_suggestion(&sid, ts)).await.map(|_| done),
        "copy" => handle.call(move |s, ts| s.copy_suggestion(&sid, ts)).await.map(|_| done),
        "preview" => {
            let preview_id = handle.call(move |s, ts| s.request_preview(&sid, ts)).await?;
            Ok((StatusCode::ACCEPTED, Json(json!({ "preview_id": preview_id }))).into_response())
        }
        other => Err(ApiError::new(ErrorCode::NotFound, format!("no suggestion action `{other}`"))),
    }
}

#[derive(Deserialize, Default)]
struct AcceptPreviewBody {
    #[serde(default)]
    selected_hunks: Option<Vec<usize>>,
    #[serde(default)]
    final_text: Option<String>,
}

async fn accept_preview(
    State(hub): State<AppState>,
    Path((id, pid)): Path<(String, String)>,
    Body(b): Body<AcceptPreviewBody>,
) -> ApiResult<StatusCode> {
    let pid = PreviewId::from(pid);
    hub.get(&id)?
        .call(move |s, ts| s.accept_preview(&pid, b.selected_hunks.as_deref(), b.final_text, ts))
        .await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn hide_preview(State(hub): State<AppState>, Path((id, pid)): Path<(String, String)>) -> ApiResult<StatusCode> {
    let pid = PreviewId::from(pid);
    hub.get(&id)?.call(move |s, ts| s.hide_preview(&pid, ts)).await?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Deserialize)]
struct RunBody {
    doc_id: Option<String>,
}

async fn run(State(hub): State<AppState>, Path(id): Path<String>, Body(b): Body<RunBody>) -> ApiResult<Response> {
    let handle = hub.get(&id)?;
    if !hub.has_runner() {
        return Err(ApiError::new(ErrorCode::RunnerUnavailable, "runner not configured"));
    }
    let run_id = handle
        .call(move |s, ts| {
            let doc = b.doc_id.map(DocId::from).unwrap_or_else(|| s.primary_doc().doc_id.clone());
            s.run_code(&doc, ts)
        })
        .await?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "run_id": run_id }))).into_response())
}

#[derive(Deserialize)]
struct StartTaskBody {
    task_id: String,
    /// Keep the current code instead of loading the task's starter.
    #[serde(default)]
    keep_code: bool,
}

async fn start_task(
    State(hub): State<AppState>,
    Path(id): Path<String>,
    Body(b): Body<StartTaskBody>,
) -> ApiResult<StatusCode> {
    let task = hub.task(&b.task_id)?.clone();
    let starter = (!b.keep_code).then_some(task.starter_code);
    hub.get(&id)?
        .call(move |s, ts| s.start_task(&task.task_id, starter.as_deref(), ts))
        .await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn submit_task(State(hub): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    hub.get(&id)?.call(|s, ts| s.submit_task(ts)).await?;
    Ok(StatusCode::NO_CONTENT)
}

fn to_event(frame: &PushFrame) -> Event {
    let kind = serde_json::to_value(frame.frame_kind)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_else(|| "message".into());
    Event::default()
        .event(kind)
        .id(frame.seq.to_string())
        .data(serde_json::to_string(frame).expect("frames serialize"))
}

/// Opens with a `notice` frame holding the current state; earlier frames
/// are not replayed.
async fn stream_frames(
    State(hub): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    let (notice, rx) = hub.get(&id)?.subscribe().await?;
    let live = BroadcastStream::new(rx).filter_map(|r| async move {
        match r {
            Ok(frame) => Some(frame),
            Err(tokio_stream::wrappers::errors::BroadcastStreamRecvError::Lagged(n)) => {
                tracing::warn!("push subscriber lagged by {n} frames");
                None
            }
        }
    });
    let frames = stream::once(async move { notice })
        .chain(live)
        .map(|f| Ok(to_event(&f)));
    Ok(Sse::new(frames).keep_alive(KeepAlive::default()))
}

async fn telemetry(State(hub): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let text = hub.log_text(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response())
}
