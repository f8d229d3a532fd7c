//! The trainer agent: a chat model grounded on one manual chunk that
//! answers the trainee and drives the simulated application through tools.

mod action;
mod llm;
mod prompt;

pub use action::{format_tool_block, parse_action, AgentAction, MalformedToolBlock, VlmTask};
pub use llm::{LlmBackend, ScriptedBackend};
pub use prompt::{greeting, render_system_prompt, render_tool_line, ASSISTANT_PROMPT};

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, ChatMessage};
use crate::clock::{Clock, SystemClock};
use crate::jsonl;
use crate::manual::ManualChunk;
use crate::sim::{AssemblySession, ToolCall, ToolName};
use crate::vision::VisionBackend;

pub const DEFAULT_MAX_ITERATIONS: usize = 8;

const CORRECTION: &str = "Your tool block was invalid";
pub const APOLOGY: &str =
    "Sorry, I could not finish that request within the allowed number of actions. Could you rephrase it?";

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("memory must start with a system turn")]
    MissingSystemTurn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TurnRole {
    System,
    Trainer,
    Trainee,
    Tool,
    Vlm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub role: TurnRole,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call: Option<ToolCall>,
    pub timestamp: u64,
}

/// Append-only conversation history plus the chunk it is grounded on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Memory {
    grounding: ManualChunk,
    turns: Vec<Turn>,
}

impl Memory {
    /// Starts a history whose first turn is the rendered system prompt.
    pub fn new(grounding: ManualChunk, clock: &dyn Clock) -> Self {
        let prompt = render_system_prompt(&grounding, &ToolName::ALL);
        let mut memory = Self {
            grounding,
            turns: Vec::new(),
        };
        memory.push(TurnRole::System, prompt, None, clock);
        memory
    }

    pub fn from_turns(grounding: ManualChunk, turns: Vec<Turn>) -> Result<Self, AgentError> {
        match turns.first() {
            Some(t) if t.role == TurnRole::System => Ok(Self { grounding, turns }),
            _ => Err(AgentError::MissingSystemTurn),
        }
    }

    pub fn grounding(&self) -> &ManualChunk {
        &self.grounding
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    fn push(
        &mut self,
        role: TurnRole,
        content: impl Into<String>,
        tool_call: Option<ToolCall>,
        clock: &dyn Clock,
    ) -> &Turn {
        self.turns.push(Turn {
            role,
            content: content.into(),
            tool_call,
            timestamp: clock.now_ms(),
        });
        self.turns.last().expect("just pushed")
    }

    /// The history as chat messages. Observations go back as user messages
    /// tagged with the tool that produced them.
    pub fn messages(&self) -> Vec<ChatMessage> {
        self.turns
            .iter()
            .map(|t| match t.role {
                TurnRole::System => ChatMessage::system(&t.content),
                TurnRole::Trainer => ChatMessage::assistant(&t.content),
                TurnRole::Trainee => ChatMessage::user(&t.content),
                TurnRole::Tool | TurnRole::Vlm => {
                    let name = t.tool_call.as_ref().map_or("unknown", |c| c.name.as_str());
                    ChatMessage::user(format!("[tool:{name}] {}", t.content))
                }
            })
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        jsonl::to_jsonl(&self.turns)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnStatus {
    Completed,
    MaxIterationsExceeded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnOutcome {
    pub reply: String,
    /// Tool and VLM calls in the order they were executed.
    pub actions: Vec<AgentAction>,
    pub status: TurnStatus,
}

pub struct TrainerAgent {
    llm: Arc<dyn LlmBackend>,
    vlm: Option<Arc<dyn VisionBackend>>,
    max_iterations: usize,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for TrainerAgent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrainerAgent")
            .field("has_vlm", &self.vlm.is_some())
            .field("max_iterations", &self.max_iterations)
            .finish_non_exhaustive()
    }
}

impl TrainerAgent {
    pub fn new(llm: Arc<dyn LlmBackend>) -> Self {
        Self {
            llm,
            vlm: None,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            clock: Arc::new(SystemClock),
        }
    }

    pub fn with_vlm(mut self, vlm: Arc<dyn VisionBackend>) -> Self {
        self.vlm = Some(vlm);
        self
    }

    pub fn with_max_iterations(mut self, n: usize) -> Self {
        self.max_iterations = n.max(1);
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn clock(&self) -> &dyn Clock {
        self.clock.as_ref()
    }

    pub fn new_memory(&self, grounding: ManualChunk) -> Memory {
        Memory::new(grounding, self.clock.as_ref())
    }

    /// Appends the fixed opening line as a trainer turn.
    pub fn greet(&self, memory: &mut Memory) -> Turn {
        let text = greeting(&memory.grounding);
        memory
            .push(TurnRole::Trainer, text, None, self.clock.as_ref())
            .clone()
    }

    pub fn run_turn(
        &self,
        memory: &mut Memory,
        session: &mut AssemblySession,
        user_msg: &str,
    ) -> Result<TurnOutcome, AgentError> {
        self.run_turn_observed(memory, session, user_msg, |_, _| {})
    }

    /// Like [`run_turn`](Self::run_turn), calling `observe` with every turn
    /// as it is appended, together with the session state at that moment.
    pub fn run_turn_observed<F>(
        &self,
        memory: &mut Memory,
        session: &mut AssemblySession,
        user_msg: &str,
        mut observe: F,
    ) -> Result<TurnOutcome, AgentError>
    where
        F: FnMut(&Turn, &AssemblySession),
    {
        let clock = self.clock.as_ref();
        let vlm = self.vlm.as_deref();
        observe(
            memory.push(TurnRole::Trainee, user_msg, None, clock),
            session,
        );
        let mut actions = Vec::new();
        let mut corrected = false;

        for _ in 0..self.max_iterations {
            let raw = self.llm.complete(&memory.messages())?;
            let action = match parse_action(&raw) {
                Ok(action) => action,
                Err(err) if !corrected => {
                    corrected = true;
                    observe(memory.push(TurnRole::Trainer, &raw, None, clock), session);
                    let note = format!(
                        "{CORRECTION}: {}. Reply with one valid ```tool block or answer in plain text.",
                        err.0
                    );
                    observe(memory.push(TurnRole::System, note, None, clock), session);
                    continue;
                }
                Err(_) => AgentAction::Respond {
                    text: raw.trim().to_string(),
                },
            };
            let (call, role) = match &action {
                AgentAction::Respond { text } => {
                    observe(memory.push(TurnRole::Trainer, text, None, clock), session);
                    return Ok(TurnOutcome {
                        reply: text.clone(),
                        actions,
                        status: TurnStatus::Completed,
                    });
                }
                AgentAction::CallTool { call } => (call.clone(), TurnRole::Tool),
                AgentAction::CallVlm { call, .. } => (call.clone(), TurnRole::Vlm),
            };
            observe(
                memory.push(TurnRole::Trainer, &raw, Some(call.clone()), clock),
                session,
            );
            let response = session.dispatch(&call, vlm);
            observe(
                memory.push(role, response.to_json(), Some(call), clock),
                session,
            );
            actions.push(action);
        }

        observe(
            memory.push(TurnRole::Trainer, APOLOGY, None, clock),
            session,
        );
        Ok(TurnOutcome {
            reply: APOLOGY.to_string(),
            actions,
            status: TurnStatus::MaxIterationsExceeded,
        })
    }
}
