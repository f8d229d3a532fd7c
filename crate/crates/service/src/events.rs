use std::fs::{File, OpenOptions};
use std::io::{self, BufReader, Write};
use std::path::Path;

use mrta_core::jsonl;
use mrta_core::sim::AssemblyState;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::broadcast;

const CHANNEL_CAPACITY: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    State,
    TrainerMessage,
    TraineeMessage,
    ToolCall,
    ToolResponse,
    VlmResult,
    Error,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::State => "state",
            EventKind::TrainerMessage => "trainer_message",
            EventKind::TraineeMessage => "trainee_message",
            EventKind::ToolCall => "tool_call",
            EventKind::ToolResponse => "tool_response",
            EventKind::VlmResult => "vlm_result",
            EventKind::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub ts: u64,
    #[serde(rename = "type")]
    pub kind: EventKind,
    pub payload: Value,
}

/// Snapshot of a session as clients see it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub manual_id: String,
    pub chunk_index: usize,
    pub state: AssemblyState,
    pub remaining_steps: u32,
    /// 1-based numbers of the steps marked done.
    pub completed_steps: Vec<u32>,
}

impl SessionView {
    pub fn new(
        session_id: &str,
        manual_id: &str,
        chunk_index: usize,
        state: &AssemblyState,
    ) -> Self {
        Self {
            session_id: session_id.to_string(),
            manual_id: manual_id.to_string(),
            chunk_index,
            state: state.clone(),
            remaining_steps: state.remaining_steps(),
            completed_steps: state
                .step_completed
                .iter()
                .enumerate()
                .filter(|(_, done)| **done)
                .map(|(i, _)| i as u32 + 1)
                .collect(),
        }
    }
}

/// Why a state event was emitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateCause {
    Created,
    Tool,
    TurnEnd,
    StepMark,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepMark {
    pub step: u32,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePayload {
    pub cause: StateCause,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_mark: Option<StepMark>,
    #[serde(flatten)]
    pub view: SessionView,
}

/// Append-only event list of one session, mirrored to a JSONL file and
/// fanned out to live subscribers.
#[derive(Debug)]
pub struct EventLog {
    events: Vec<Event>,
    file: Option<File>,
    tx: broadcast::Sender<Event>,
}

impl EventLog {
    pub fn create(path: Option<&Path>) -> io::Result<Self> {
        let file = match path {
            Some(p) => Some(File::create(p)?),
            None => None,
        };
        Ok(Self::with(Vec::new(), file))
    }

    /// Reopens a persisted log for appending.
    pub fn open(path: &Path) -> io::Result<Self> {
        let events: Vec<Event> = jsonl::read_jsonl(BufReader::new(File::open(path)?))?;
        for (i, e) in events.iter().enumerate() {
            if e.seq != i as u64 + 1 {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("{}: seq gap at line {}", path.display(), i + 1),
                ));
            }
        }
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(Self::with(events, Some(file)))
    }

    fn with(events: Vec<Event>, file: Option<File>) -> Self {
        let (tx, _) = broadcast::channel(CHANNEL_CAPACITY);
        Self { events, file, tx }
    }

    pub fn append(&mut self, kind: EventKind, ts: u64, payload: Value) -> io::Result<Event> {
        let event = Event {
            seq: self.last_seq() + 1,
            ts,
            kind,
            payload,
        };
        if let Some(file) = &mut self.file {
            let mut line = serde_json::to_vec(&event).map_err(io::Error::other)?;
            line.push(b'\n');
            file.write_all(&line)?;
            file.flush()?;
        }
        self.events.push(event.clone());
        let _ = self.tx.send(event.clone());
        Ok(event)
    }

    pub fn last_seq(&self) -> u64 {
        self.events.last().map_or(0, |e| e.seq)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn since(&self, from_seq: u64) -> Vec<Event> {
        let start = (from_seq as usize).min(self.events.len());
        self.events[start..].to_vec()
    }

    /// Events after `from_seq` plus a receiver for everything appended
    /// later; taken together they have no gaps and no duplicates.
    pub fn subscribe(&self, from_seq: u64) -> (Vec<Event>, broadcast::Receiver<Event>) {
        (self.since(from_seq), self.tx.subscribe())
    }
}
