use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::backend::{BackendError, ChatMessage, HttpChatClient};

/// A chat model: maps a conversation to the assistant's next message.
pub trait LlmBackend: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError>;

    /// Called when a conversation is restored after `completions` earlier
    /// answers. Stateless backends ignore it.
    fn resume_after(&self, completions: usize) {
        let _ = completions;
    }
}

impl LlmBackend for HttpChatClient {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        HttpChatClient::complete(self, messages)
    }
}

/// Replays a fixed list of outputs in order, ignoring its input.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    script: Vec<String>,
    next: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new<I, S>(script: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            script: script.into_iter().map(Into::into).collect(),
            next: AtomicUsize::new(0),
        }
    }

    /// Loads a JSON array of strings.
    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let text = fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        let script: Vec<String> = serde_json::from_str(&text)
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        Ok(Self::new(script))
    }

    pub fn len(&self) -> usize {
        self.script.len()
    }

    pub fn is_empty(&self) -> bool {
        self.script.is_empty()
    }

    pub fn consumed(&self) -> usize {
        self.next.load(Ordering::SeqCst).min(self.script.len())
    }
}

impl LlmBackend for ScriptedBackend {
    fn complete(&self, _messages: &[ChatMessage]) -> Result<String, BackendError> {
        let i = self.next.fetch_add(1, Ordering::SeqCst);
        self.script
            .get(i)
            .cloned()
            .ok_or(BackendError::ScriptExhausted(self.script.len()))
    }

    fn resume_after(&self, completions: usize) {
        self.next.store(completions, Ordering::SeqCst);
    }
}
