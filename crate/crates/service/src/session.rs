use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};
use std::thread;

use mrta_core::agent::{AgentError, Memory, TrainerAgent, Turn, TurnRole, TurnStatus, APOLOGY};
use mrta_core::clock::Clock;
use mrta_core::config::BackendConfig;
use mrta_core::manual::ManualChunk;
use mrta_core::sim::{AssemblySession, StepOutOfRange, ToolResponse, TraceEntry};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::{broadcast, oneshot};

use crate::events::{Event, EventKind, EventLog, SessionView, StateCause, StatePayload, StepMark};
use crate::{ClockFactory, ServiceError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub session_id: String,
    pub manual_id: String,
    pub chunk_index: usize,
    pub created_at: u64,
    pub backend: BackendConfig,
    pub system_turn: Turn,
}

pub(crate) fn meta_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.meta.json"))
}

pub(crate) fn log_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.events.jsonl"))
}

enum Command {
    Message(String),
    Step {
        step: i64,
        done: bool,
        reply: oneshot::Sender<Result<Event, ServiceError>>,
    },
}

/// A live session: its event log, latest view and the queue feeding its
/// worker thread.
#[derive(Debug)]
pub struct SessionHandle {
    pub meta: SessionMeta,
    log: Arc<Mutex<EventLog>>,
    view: Arc<RwLock<SessionView>>,
    commands: Mutex<mpsc::Sender<Command>>,
    pending: Arc<AtomicUsize>,
}

fn lock(log: &Mutex<EventLog>) -> MutexGuard<'_, EventLog> {
    log.lock().unwrap_or_else(|e| e.into_inner())
}

impl SessionHandle {
    pub fn view(&self) -> SessionView {
        self.view.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn last_seq(&self) -> u64 {
        lock(&self.log).last_seq()
    }

    pub fn events_since(&self, from_seq: u64) -> Vec<Event> {
        lock(&self.log).since(from_seq)
    }

    pub fn subscribe(&self, from_seq: u64) -> (Vec<Event>, broadcast::Receiver<Event>) {
        lock(&self.log).subscribe(from_seq)
    }

    /// Blocks until a turn-end state event arrives after `from_seq`,
    /// passing every event on the way to `on_event`. Returns the seq of
    /// that state event. Must not be called from inside the async runtime.
    pub fn follow_turn_blocking(
        &self,
        from_seq: u64,
        mut on_event: impl FnMut(&Event),
    ) -> Result<u64, ServiceError> {
        let (replay, mut rx) = self.subscribe(from_seq);
        let mut buffer: std::collections::VecDeque<Event> = replay.into();
        let mut last = from_seq;
        loop {
            while let Some(event) = buffer.pop_front() {
                if event.seq <= last {
                    continue;
                }
                last = event.seq;
                on_event(&event);
                if is_turn_end(&event) {
                    return Ok(last);
                }
            }
            match rx.blocking_recv() {
                Ok(event) => buffer.push_back(event),
                Err(broadcast::error::RecvError::Lagged(_)) => {
                    buffer = self.events_since(last).into()
                }
                Err(broadcast::error::RecvError::Closed) => return Err(ServiceError::WorkerGone),
            }
        }
    }

    /// Messages accepted but not yet fully processed.
    pub fn pending(&self) -> usize {
        self.pending.load(Ordering::SeqCst)
    }

    pub(crate) fn post(&self, text: String) -> Result<usize, ServiceError> {
        if self.view().state.finished {
            return Err(ServiceError::SessionFinished(self.meta.session_id.clone()));
        }
        let queued = self.pending.fetch_add(1, Ordering::SeqCst) + 1;
        self.send(Command::Message(text))?;
        Ok(queued)
    }

    pub(crate) async fn control_step(&self, step: i64, done: bool) -> Result<Event, ServiceError> {
        let (reply, rx) = oneshot::channel();
        self.send(Command::Step { step, done, reply })?;
        rx.await.map_err(|_| ServiceError::WorkerGone)?
    }

    /// Blocking variant for callers outside the async runtime.
    pub fn control_step_blocking(&self, step: i64, done: bool) -> Result<Event, ServiceError> {
        let (reply, rx) = oneshot::channel();
        self.send(Command::Step { step, done, reply })?;
        rx.blocking_recv().map_err(|_| ServiceError::WorkerGone)?
    }

    fn send(&self, command: Command) -> Result<(), ServiceError> {
        self.commands
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .send(command)
            .map_err(|_| ServiceError::WorkerGone)
    }
}

struct Worker {
    agent: TrainerAgent,
    memory: Memory,
    session: AssemblySession,
    meta: SessionMeta,
    log: Arc<Mutex<EventLog>>,
    view: Arc<RwLock<SessionView>>,
    pending: Arc<AtomicUsize>,
    clock: Arc<dyn Clock>,
}

fn turn_event(turn: &Turn) -> (EventKind, Value) {
    let turn_json = serde_json::to_value(turn).expect("turn serializes");
    let name = turn.tool_call.as_ref().map(|c| c.name.as_str());
    match turn.role {
        TurnRole::Trainee => (
            EventKind::TraineeMessage,
            json!({"text": turn.content, "turn": turn_json}),
        ),
        TurnRole::Trainer => match &turn.tool_call {
            Some(call) => (
                EventKind::ToolCall,
                json!({"name": call.name, "args": call.args, "text": turn.content, "turn": turn_json}),
            ),
            None => (
                EventKind::TrainerMessage,
                json!({"text": turn.content, "turn": turn_json}),
            ),
        },
        TurnRole::Tool | TurnRole::Vlm => {
            let response: Value = serde_json::from_str(&turn.content).unwrap_or(Value::Null);
            let kind = if turn.role == TurnRole::Tool {
                EventKind::ToolResponse
            } else {
                EventKind::VlmResult
            };
            (
                kind,
                json!({"name": name, "response": response, "turn": turn_json}),
            )
        }
        TurnRole::System => (
            EventKind::Error,
            json!({"code": "malformed_tool_block", "message": turn.content, "turn": turn_json}),
        ),
    }
}

impl Worker {
    fn emit(&self, kind: EventKind, ts: u64, payload: Value) -> io::Result<Event> {
        lock(&self.log).append(kind, ts, payload)
    }

    fn emit_state(&self, cause: StateCause, step_mark: Option<StepMark>) -> io::Result<Event> {
        let view = SessionView::new(
            &self.meta.session_id,
            &self.meta.manual_id,
            self.meta.chunk_index,
            self.session.state(),
        );
        *self.view.write().unwrap_or_else(|e| e.into_inner()) = view.clone();
        let payload = StatePayload {
            cause,
            step_mark,
            view,
        };
        self.emit(
            EventKind::State,
            self.clock.now_ms(),
            serde_json::to_value(payload).expect("state serializes"),
        )
    }

    fn handle_message(&mut self, text: &str) -> io::Result<()> {
        let mut io_error = None;
        let mut last_state = self.session.state().clone();
        let log = Arc::clone(&self.log);
        let view = Arc::clone(&self.view);
        let clock = Arc::clone(&self.clock);
        let meta = self.meta.clone();
        let result = self.agent.run_turn_observed(
            &mut self.memory,
            &mut self.session,
            text,
            |turn, session| {
                let (kind, payload) = turn_event(turn);
                let mut log = lock(&log);
                if let Err(e) = log.append(kind, turn.timestamp, payload) {
                    io_error.get_or_insert(e);
                }
                let is_observation = matches!(turn.role, TurnRole::Tool | TurnRole::Vlm);
                if is_observation && session.state() != &last_state {
                    last_state = session.state().clone();
                    let v = SessionView::new(
                        &meta.session_id,
                        &meta.manual_id,
                        meta.chunk_index,
                        session.state(),
                    );
                    *view.write().unwrap_or_else(|e| e.into_inner()) = v.clone();
                    let payload = StatePayload {
                        cause: StateCause::Tool,
                        step_mark: None,
                        view: v,
                    };
                    let payload = serde_json::to_value(payload).expect("state serializes");
                    if let Err(e) = log.append(EventKind::State, clock.now_ms(), payload) {
                        io_error.get_or_insert(e);
                    }
                }
            },
        );
        match result {
            Ok(outcome) if outcome.status == TurnStatus::MaxIterationsExceeded => {
                self.emit(
                    EventKind::Error,
                    self.clock.now_ms(),
                    json!({"code": "max_iterations_exceeded", "message": "the trainer hit its action limit"}),
                )?;
            }
            Ok(_) => {}
            Err(AgentError::Backend(e)) => {
                self.emit(
                    EventKind::Error,
                    self.clock.now_ms(),
                    json!({"code": "backend_error", "message": e.to_string()}),
                )?;
            }
            Err(e) => {
                self.emit(
                    EventKind::Error,
                    self.clock.now_ms(),
                    json!({"code": "agent_error", "message": e.to_string()}),
                )?;
            }
        }
        if let Some(e) = io_error {
            return Err(e);
        }
        self.emit_state(StateCause::TurnEnd, None)?;
        Ok(())
    }

    fn handle_step(&mut self, step: i64, done: bool) -> Result<Event, ServiceError> {
        self.session
            .set_step_completed(step, done)
            .map_err(
                |StepOutOfRange { step, total }| ServiceError::StepOutOfRange { step, total },
            )?;
        let mark = StepMark {
            step: step as u32,
            done,
        };
        Ok(self.emit_state(StateCause::StepMark, Some(mark))?)
    }

    fn run(mut self, commands: mpsc::Receiver<Command>) {
        while let Ok(command) = commands.recv() {
            match command {
                Command::Message(text) => {
                    if let Err(e) = self.handle_message(&text) {
                        tracing::error!(session = %self.meta.session_id, "event log write failed: {e}");
                    }
                    self.pending.fetch_sub(1, Ordering::SeqCst);
                }
                Command::Step { step, done, reply } => {
                    let _ = reply.send(self.handle_step(step, done));
                }
            }
        }
    }
}

fn spawn(worker: Worker) -> SessionHandle {
    let (tx, rx) = mpsc::channel();
    let handle = SessionHandle {
        meta: worker.meta.clone(),
        log: Arc::clone(&worker.log),
        view: Arc::clone(&worker.view),
        commands: Mutex::new(tx),
        pending: Arc::clone(&worker.pending),
    };
    thread::Builder::new()
        .name(format!("session-{}", worker.meta.session_id))
        .spawn(move || worker.run(rx))
        .expect("spawn session worker");
    handle
}

fn build_agent(
    backend: &BackendConfig,
    clock: Arc<dyn Clock>,
    resume_after: usize,
) -> Result<TrainerAgent, ServiceError> {
    let llm = backend.build_llm().map_err(ServiceError::BackendConfig)?;
    if resume_after > 0 {
        llm.resume_after(resume_after);
    }
    let mut agent = TrainerAgent::new(llm)
        .with_max_iterations(backend.max_iterations)
        .with_clock(clock);
    if let Some(vlm) = backend.build_vlm().map_err(ServiceError::BackendConfig)? {
        agent = agent.with_vlm(vlm);
    }
    Ok(agent)
}

/// Starts a new session: greeting then initial state, persisted under
/// `log_dir` when given.
pub(crate) fn create(
    session_id: String,
    chunk: &ManualChunk,
    backend: BackendConfig,
    clocks: &ClockFactory,
    log_dir: Option<&Path>,
) -> Result<SessionHandle, ServiceError> {
    let clock = clocks(0);
    let agent = build_agent(&backend, Arc::clone(&clock), 0)?;
    let created_at = clock.now_ms();
    let mut memory = agent.new_memory(chunk.clone());
    let session = AssemblySession::new(session_id.clone(), Arc::new(chunk.as_manual()));
    let meta = SessionMeta {
        session_id: session_id.clone(),
        manual_id: chunk.manual_id.clone(),
        chunk_index: chunk.chunk_index,
        created_at,
        backend,
        system_turn: memory.turns()[0].clone(),
    };
    let log = match log_dir {
        Some(dir) => {
            let mut text = serde_json::to_vec_pretty(&meta).expect("meta serializes");
            text.push(b'\n');
            fs::write(meta_path(dir, &session_id), text)?;
            EventLog::create(Some(&log_path(dir, &session_id)))?
        }
        None => EventLog::create(None)?,
    };
    let greeting = agent.greet(&mut memory);
    let view = SessionView::new(
        &session_id,
        &meta.manual_id,
        meta.chunk_index,
        session.state(),
    );
    let worker = Worker {
        agent,
        memory,
        session,
        meta,
        log: Arc::new(Mutex::new(log)),
        view: Arc::new(RwLock::new(view)),
        pending: Arc::new(AtomicUsize::new(0)),
        clock,
    };
    let (kind, payload) = turn_event(&greeting);
    worker.emit(kind, greeting.timestamp, payload)?;
    worker.emit_state(StateCause::Created, None)?;
    Ok(spawn(worker))
}

/// Rebuilds a session from its meta file and event log.
pub(crate) fn restore(
    dir: &Path,
    meta: SessionMeta,
    chunk: &ManualChunk,
    clocks: &ClockFactory,
) -> Result<SessionHandle, ServiceError> {
    let log = EventLog::open(&log_path(dir, &meta.session_id))?;
    let last_ts = log
        .events()
        .iter()
        .map(|e| e.ts)
        .max()
        .unwrap_or(meta.created_at);
    let clock = clocks(last_ts);

    let mut turns = vec![meta.system_turn.clone()];
    let mut trace = Vec::new();
    let mut state = None;
    for event in log.events() {
        if let Some(turn) = event.payload.get("turn") {
            let turn: Turn = serde_json::from_value(turn.clone()).map_err(io::Error::other)?;
            if let (Some(call), true) = (
                &turn.tool_call,
                matches!(turn.role, TurnRole::Tool | TurnRole::Vlm),
            ) {
                let response: ToolResponse =
                    serde_json::from_str(&turn.content).map_err(io::Error::other)?;
                trace.push(TraceEntry::Tool {
                    call: call.clone(),
                    response,
                });
            }
            turns.push(turn);
        } else if event.kind == EventKind::State {
            let payload: StatePayload =
                serde_json::from_value(event.payload.clone()).map_err(io::Error::other)?;
            if let Some(mark) = payload.step_mark {
                trace.push(TraceEntry::StepMark {
                    step: mark.step,
                    done: mark.done,
                });
            }
            state = Some(payload.view);
        }
    }
    let completions = turns
        .iter()
        .skip(2)
        .filter(|t| t.role == TurnRole::Trainer && t.content != APOLOGY)
        .count();
    let agent = build_agent(&meta.backend, Arc::clone(&clock), completions)?;

    let view = state.ok_or_else(|| {
        io::Error::new(io::ErrorKind::InvalidData, "event log has no state event")
    })?;
    let memory = Memory::from_turns(chunk.clone(), turns)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
    let session = AssemblySession::restore(
        meta.session_id.clone(),
        Arc::new(chunk.as_manual()),
        view.state.clone(),
        trace,
    );
    let worker = Worker {
        agent,
        memory,
        session,
        meta,
        log: Arc::new(Mutex::new(log)),
        view: Arc::new(RwLock::new(view)),
        pending: Arc::new(AtomicUsize::new(0)),
        clock,
    };
    Ok(spawn(worker))
}

pub(crate) fn is_turn_end(event: &Event) -> bool {
    event.kind == EventKind::State
        && event.payload.get("cause").and_then(Value::as_str) == Some("turn_end")
}
