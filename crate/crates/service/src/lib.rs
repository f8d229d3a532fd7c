//! Live training sessions over HTTP. Every session owns a worker thread
//! that runs the trainer agent; clients follow along through an
//! append-only event stream.

mod events;
mod session;

pub use events::{Event, EventKind, EventLog, SessionView, StateCause, StatePayload, StepMark};
pub use session::{SessionHandle, SessionMeta};

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::convert::Infallible;
use std::fs;
use std::future::Future;
use std::io;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{self, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::{stream, Stream, StreamExt};
use mrta_core::backend::BackendError;
use mrta_core::clock::{Clock, LogicalClock, SystemClock};
use mrta_core::config::BackendConfig;
use mrta_core::manual::{chunk_manual, InstructionManual, ManualChunk};
use mrta_core::sim::tool_specs;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::{broadcast, watch};

pub const KEEP_ALIVE: Duration = Duration::from_secs(15);

/// Builds the clock for a session given the latest timestamp already in
/// its log (0 for new sessions).
pub type ClockFactory = Arc<dyn Fn(u64) -> Arc<dyn Clock> + Send + Sync>;

pub fn system_clocks() -> ClockFactory {
    Arc::new(|_| Arc::new(SystemClock) as Arc<dyn Clock>)
}

/// Per-session logical clocks ticking by `step`, resuming past the last
/// recorded timestamp.
pub fn logical_clocks(step: u64) -> ClockFactory {
    Arc::new(move |last| Arc::new(LogicalClock::new(last + step, step)) as Arc<dyn Clock>)
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown manual `{0}`")]
    UnknownManual(String),
    #[error("manual `{manual_id}` has no chunk {chunk_index}")]
    UnknownChunk {
        manual_id: String,
        chunk_index: usize,
    },
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("session `{0}` is finished")]
    SessionFinished(String),
    #[error("message text is empty")]
    EmptyMessage,
    #[error("step {step} out of range 1..={total}")]
    StepOutOfRange { step: i64, total: u32 },
    #[error("backend config: {0}")]
    BackendConfig(BackendError),
    #[error("no backend configured for this service")]
    NoBackend,
    #[error("backend config not allowed in requests: {0}")]
    BackendNotAllowed(&'static str),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("session worker stopped")]
    WorkerGone,
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownManual(_) => "unknown_manual",
            ServiceError::UnknownChunk { .. } => "unknown_chunk",
            ServiceError::UnknownSession(_) => "unknown_session",
            ServiceError::SessionFinished(_) => "session_finished",
            ServiceError::EmptyMessage => "empty_message",
            ServiceError::StepOutOfRange { .. } => "step_out_of_range",
            ServiceError::BackendConfig(_)
            | ServiceError::NoBackend
            | ServiceError::BackendNotAllowed(_) => "backend_config",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::WorkerGone | ServiceError::Io(_) => "internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::UnknownManual(_)
            | ServiceError::UnknownChunk { .. }
            | ServiceError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ServiceError::SessionFinished(_) => StatusCode::CONFLICT,
            ServiceError::EmptyMessage
            | ServiceError::StepOutOfRange { .. }
            | ServiceError::BackendConfig(_)
            | ServiceError::NoBackend
            | ServiceError::BackendNotAllowed(_)
            | ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::WorkerGone | ServiceError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = json!({"error": self.code(), "message": self.to_string()});
        (self.status(), Json(body)).into_response()
    }
}

#[derive(Clone)]
pub struct ServiceConfig {
    pub manuals: Vec<InstructionManual>,
    pub chunk_size: usize,
    /// Used when a create request names no backend.
    pub backend: Option<BackendConfig>,
    /// Where event logs live; sessions found there are restored on start.
    pub log_dir: Option<PathBuf>,
    pub clocks: ClockFactory,
}

impl ServiceConfig {
    pub fn new(manuals: Vec<InstructionManual>) -> Self {
        Self {
            manuals,
            chunk_size: 10,
            backend: None,
            log_dir: None,
            clocks: system_clocks(),
        }
    }

    pub fn with_backend(mut self, backend: BackendConfig) -> Self {
        self.backend = Some(backend);
        self
    }

    pub fn with_log_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.log_dir = Some(dir.into());
        self
    }

    pub fn with_clocks(mut self, clocks: ClockFactory) -> Self {
        self.clocks = clocks;
        self
    }

    pub fn with_chunk_size(mut self, chunk_size: usize) -> Self {
        self.chunk_size = chunk_size;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub manual_id: String,
    #[serde(default)]
    pub chunk_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<BackendConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub created_at: u64,
    pub last_seq: u64,
    #[serde(flatten)]
    pub view: SessionView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManualSummary {
    pub id: String,
    pub title: String,
    pub steps: usize,
    pub chunks: usize,
}

struct Inner {
    config: ServiceConfig,
    chunks: HashMap<String, Vec<ManualChunk>>,
    sessions: RwLock<BTreeMap<String, Arc<SessionHandle>>>,
    next_id: AtomicU64,
    shutdown: watch::Sender<bool>,
}

/// Shared service state; cheap to clone.
#[derive(Clone)]
pub struct Service {
    inner: Arc<Inner>,
}

fn parse_session_number(id: &str) -> Option<u64> {
    id.strip_prefix('s')?.parse().ok()
}

impl Service {
    /// Builds the service, restoring every session persisted in the log
    /// directory.
    pub fn new(config: ServiceConfig) -> Result<Self, ServiceError> {
        let chunks = config
            .manuals
            .iter()
            .map(|m| (m.id.clone(), chunk_manual(m, config.chunk_size)))
            .collect();
        let (shutdown, _) = watch::channel(false);
        let service = Self {
            inner: Arc::new(Inner {
                config,
                chunks,
                sessions: RwLock::new(BTreeMap::new()),
                next_id: AtomicU64::new(1),
                shutdown,
            }),
        };
        if let Some(dir) = &service.inner.config.log_dir {
            fs::create_dir_all(dir)?;
            service.restore_all(dir)?;
        }
        Ok(service)
    }

    fn restore_all(&self, dir: &std::path::Path) -> Result<(), ServiceError> {
        let mut metas: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.to_string_lossy().ends_with(".meta.json"))
            .collect();
        metas.sort();
        let mut max_id = 0;
        for path in metas {
            let meta: SessionMeta =
                serde_json::from_str(&fs::read_to_string(&path)?).map_err(|e| {
                    io::Error::new(
                        io::ErrorKind::InvalidData,
                        format!("{}: {e}", path.display()),
                    )
                })?;
            let chunk = self.chunk(&meta.manual_id, meta.chunk_index)?.clone();
            max_id = max_id.max(parse_session_number(&meta.session_id).unwrap_or(0));
            let id = meta.session_id.clone();
            let handle = session::restore(dir, meta, &chunk, &self.inner.config.clocks)?;
            tracing::info!(session = %id, events = handle.last_seq(), "restored session");
            self.write_sessions().insert(id, Arc::new(handle));
        }
        self.inner.next_id.store(max_id + 1, Ordering::SeqCst);
        Ok(())
    }

    fn write_sessions(
        &self,
    ) -> std::sync::RwLockWriteGuard<'_, BTreeMap<String, Arc<SessionHandle>>> {
        self.inner
            .sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
    }

    fn chunk(&self, manual_id: &str, chunk_index: usize) -> Result<&ManualChunk, ServiceError> {
        let chunks = self
            .inner
            .chunks
            .get(manual_id)
            .ok_or_else(|| ServiceError::UnknownManual(manual_id.to_string()))?;
        chunks
            .get(chunk_index)
            .ok_or_else(|| ServiceError::UnknownChunk {
                manual_id: manual_id.to_string(),
                chunk_index,
            })
    }

    pub fn manuals(&self) -> Vec<ManualSummary> {
        self.inner
            .config
            .manuals
            .iter()
            .map(|m| ManualSummary {
                id: m.id.clone(),
                title: m.title.clone(),
                steps: m.steps.len(),
                chunks: self.inner.chunks.get(&m.id).map_or(0, Vec::len),
            })
            .collect()
    }

    pub fn create_session(
        &self,
        request: CreateSession,
    ) -> Result<Arc<SessionHandle>, ServiceError> {
        let chunk = self.chunk(&request.manual_id, request.chunk_index)?;
        let backend = request
            .backend
            .or_else(|| self.inner.config.backend.clone())
            .ok_or(ServiceError::NoBackend)?;
        let number = self.inner.next_id.fetch_add(1, Ordering::SeqCst);
        let id = format!("s{number:06}");
        let handle = Arc::new(session::create(
            id.clone(),
            chunk,
            backend,
            &self.inner.config.clocks,
            self.inner.config.log_dir.as_deref(),
        )?);
        self.write_sessions().insert(id, Arc::clone(&handle));
        Ok(handle)
    }

    pub fn session(&self, id: &str) -> Result<Arc<SessionHandle>, ServiceError> {
        self.inner
            .sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    pub fn session_ids(&self) -> Vec<String> {
        self.inner
            .sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .keys()
            .cloned()
            .collect()
    }

    pub fn info(&self, id: &str) -> Result<SessionInfo, ServiceError> {
        let handle = self.session(id)?;
        Ok(SessionInfo {
            created_at: handle.meta.created_at,
            last_seq: handle.last_seq(),
            view: handle.view(),
        })
    }

    /// Queues a trainee message; returns how many messages are pending.
    pub fn post_message(&self, id: &str, text: &str) -> Result<usize, ServiceError> {
        let handle = self.session(id)?;
        if text.trim().is_empty() {
            return Err(ServiceError::EmptyMessage);
        }
        handle.post(text.to_string())
    }

    pub async fn control_step(
        &self,
        id: &str,
        step: i64,
        done: bool,
    ) -> Result<Event, ServiceError> {
        self.session(id)?.control_step(step, done).await
    }

    /// Ends all open event streams.
    pub fn begin_shutdown(&self) {
        self.inner.shutdown.send_replace(true);
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/sessions", post(create_session))
            .route("/sessions/{id}", get(get_session))
            .route("/sessions/{id}/messages", post(post_message))
            .route("/sessions/{id}/events", get(stream_events))
            .route("/sessions/{id}/steps/{n}", post(control_step))
            .route("/manuals", get(list_manuals))
            .route("/tools", get(list_tools))
            .with_state(self.clone())
    }

    /// Serves until `shutdown` resolves, then closes streams and drains
    /// in-flight requests.
    pub async fn serve<F>(&self, listener: TcpListener, shutdown: F) -> io::Result<()>
    where
        F: Future<Output = ()> + Send + 'static,
    {
        let this = self.clone();
        axum::serve(listener, self.router())
            .with_graceful_shutdown(async move {
                shutdown.await;
                this.begin_shutdown();
            })
            .await
    }

    /// Stream of events after `from_seq`, live-tailing until shutdown.
    pub fn event_stream(
        &self,
        id: &str,
        from_seq: u64,
    ) -> Result<impl Stream<Item = Event> + Send + 'static, ServiceError> {
        let handle = self.session(id)?;
        let (replay, rx) = handle.subscribe(from_seq);
        let tail = Tail {
            handle,
            rx,
            last: from_seq,
            buffer: replay.into(),
        };
        let events = stream::unfold(tail, |mut tail| async move {
            let event = tail.next().await?;
            Some((event, tail))
        });
        let mut stop = self.inner.shutdown.subscribe();
        let stopped = async move {
            let _ = stop.wait_for(|s| *s).await;
        };
        Ok(events.take_until(stopped))
    }
}

struct Tail {
    handle: Arc<SessionHandle>,
    rx: broadcast::Receiver<Event>,
    last: u64,
    buffer: VecDeque<Event>,
}

impl Tail {
    async fn next(&mut self) -> Option<Event> {
        loop {
            while let Some(event) = self.buffer.pop_front() {
                if event.seq > self.last {
                    self.last = event.seq;
                    return Some(event);
                }
            }
            match self.rx.recv().await {
                Ok(event) => self.buffer.push_back(event),
                Err(broadcast::error::RecvError::Lagged(_)) => {
                    self.buffer = self.handle.events_since(self.last).into();
                }
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    }
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(e.to_string()))
}

async fn create_session(
    State(service): State<Service>,
    body: Bytes,
) -> Result<(StatusCode, Json<SessionInfo>), ServiceError> {
    let request: CreateSession = parse_body(&body)?;
    if let Some(backend) = &request.backend {
        if !backend.is_local() {
            return Err(ServiceError::BackendNotAllowed(
                "only scripted and mock backends",
            ));
        }
        if backend.reads_files() {
            return Err(ServiceError::BackendNotAllowed(
                "file references are not accepted",
            ));
        }
    }
    let handle = service.create_session(request)?;
    let info = service.info(&handle.meta.session_id)?;
    Ok((StatusCode::CREATED, Json(info)))
}

async fn get_session(
    State(service): State<Service>,
    Path(id): Path<String>,
) -> Result<Json<SessionInfo>, ServiceError> {
    Ok(Json(service.info(&id)?))
}

#[derive(Deserialize)]
struct MessageBody {
    text: String,
}

async fn post_message(
    State(service): State<Service>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<(StatusCode, Json<serde_json::Value>), ServiceError> {
    service.session(&id)?;
    let message: MessageBody = parse_body(&body)?;
    let queued = service.post_message(&id, &message.text)?;
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({"accepted": true, "queued": queued})),
    ))
}

#[derive(Deserialize)]
struct EventsQuery {
    from_seq: Option<u64>,
}

async fn stream_events(
    State(service): State<Service>,
    Path(id): Path<String>,
    Query(query): Query<EventsQuery>,
    headers: HeaderMap,
) -> Result<Sse<impl Stream<Item = Result<sse::Event, Infallible>>>, ServiceError> {
    let last_event_id = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse().ok());
    let from_seq = query.from_seq.or(last_event_id).unwrap_or(0);
    let events = service.event_stream(&id, from_seq)?.map(|event| {
        let data = serde_json::to_string(&event).expect("event serializes");
        Ok(sse::Event::default()
            .id(event.seq.to_string())
            .event(event.kind.as_str())
            .data(data))
    });
    Ok(Sse::new(events).keep_alive(KeepAlive::new().interval(KEEP_ALIVE)))
}

#[derive(Deserialize)]
struct StepBody {
    done: bool,
}

async fn control_step(
    State(service): State<Service>,
    Path((id, n)): Path<(String, String)>,
    body: Bytes,
) -> Result<Json<Event>, ServiceError> {
    service.session(&id)?;
    let step: i64 = n
        .parse()
        .map_err(|_| ServiceError::BadRequest(format!("step `{n}` is not an integer")))?;
    let body: StepBody = parse_body(&body)?;
    Ok(Json(service.control_step(&id, step, body.done).await?))
}

async fn list_manuals(State(service): State<Service>) -> Json<Vec<ManualSummary>> {
    Json(service.manuals())
}

async fn list_tools() -> Response {
    Json(tool_specs()).into_response()
}
