use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::format_tool_block;
use crate::sim::{ToolCall, ToolName, ToolResponse};

const ACCOMPLISH_STEM: &str = "accomplish";
const EXPERIENCE_STEM: &str = "experience";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Speaker {
    Trainer,
    Trainee,
}

impl Speaker {
    pub fn as_str(self) -> &'static str {
        match self {
            Speaker::Trainer => "Trainer",
            Speaker::Trainee => "Trainee",
        }
    }
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationTurn {
    pub speaker: Speaker,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call: Option<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_response: Option<ToolResponse>,
    /// Index into the record's section titles; `None` before the first title.
    pub section: Option<usize>,
}

impl ConversationTurn {
    /// Single-line rendering of the utterance, tool call included.
    pub fn utterance(&self) -> String {
        match &self.tool_call {
            Some(call) => {
                let block = format_tool_block(call).replace('\n', " ");
                if self.text.is_empty() {
                    block
                } else {
                    format!("{} {block}", self.text)
                }
            }
            None => self.text.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationRecord {
    pub conv_id: String,
    pub manual_id: String,
    pub chunk_index: usize,
    pub section_titles: Vec<String>,
    pub turns: Vec<ConversationTurn>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TranscriptParseError {
    #[error("transcript has no Trainer/Trainee turns")]
    NoTurns,
    #[error("line {line}: text outside any turn")]
    TextOutsideTurn { line: usize },
    #[error("line {line}: unterminated ``` fence")]
    UnterminatedFence { line: usize },
    #[error("line {line}: bad tool block: {reason}")]
    BadToolBlock { line: usize, reason: String },
    #[error("line {line}: bad response block: {reason}")]
    BadResponseBlock { line: usize, reason: String },
    #[error("line {line}: response block without a preceding tool call")]
    OrphanResponse { line: usize },
    #[error("line {line}: second tool block in one turn")]
    DuplicateToolBlock { line: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Empty,
    FirstSpeakerNotTrainer,
    NotAlternating { turn_index: usize },
    MissingSectionTitles,
    SectionWithoutEngagement { section: usize },
    MissingClosingProtocol,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCall {
    name: String,
    #[serde(default)]
    args: serde_json::Map<String, serde_json::Value>,
}

fn speaker_line(line: &str) -> Option<(Speaker, &str)> {
    for speaker in [Speaker::Trainer, Speaker::Trainee] {
        if let Some(rest) = line.strip_prefix(speaker.as_str()) {
            if let Some(text) = rest.strip_prefix(':') {
                return Some((speaker, text.trim()));
            }
        }
    }
    None
}

/// Parsed transcript: section titles and turns.
pub type Transcript = (Vec<String>, Vec<ConversationTurn>);

/// Parses `## title` / `Trainer:` / `Trainee:` lines with inline
/// ```` ```tool ```` and ```` ```response ```` blocks. Continuation lines
/// extend the current utterance.
pub fn parse_transcript(text: &str) -> Result<Transcript, TranscriptParseError> {
    let mut titles: Vec<String> = Vec::new();
    let mut turns: Vec<ConversationTurn> = Vec::new();
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    while let Some((no, line)) = lines.next() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with('#') {
            let title = trimmed.trim_start_matches('#').trim();
            if !title.is_empty() {
                titles.push(title.to_string());
            }
            continue;
        }
        if let Some(kind) = trimmed.strip_prefix("```") {
            let kind = kind.trim().to_string();
            let mut body = String::new();
            let mut closed = false;
            for (_, inner) in lines.by_ref() {
                if inner.trim() == "```" {
                    closed = true;
                    break;
                }
                body.push_str(inner);
                body.push('\n');
            }
            if !closed {
                return Err(TranscriptParseError::UnterminatedFence { line: no });
            }
            let turn = turns
                .last_mut()
                .ok_or(TranscriptParseError::TextOutsideTurn { line: no })?;
            match kind.as_str() {
                "tool" => {
                    if turn.tool_call.is_some() {
                        return Err(TranscriptParseError::DuplicateToolBlock { line: no });
                    }
                    let bad =
                        |reason: String| TranscriptParseError::BadToolBlock { line: no, reason };
                    let raw: RawCall =
                        serde_json::from_str(&body).map_err(|e| bad(e.to_string()))?;
                    let name: ToolName = raw.name.parse().map_err(|e| bad(format!("{e}")))?;
                    turn.tool_call = Some(ToolCall {
                        name,
                        args: raw.args,
                    });
                }
                "response" => {
                    if turn.tool_call.is_none() || turn.tool_response.is_some() {
                        return Err(TranscriptParseError::OrphanResponse { line: no });
                    }
                    let response: ToolResponse = serde_json::from_str(&body).map_err(|e| {
                        TranscriptParseError::BadResponseBlock {
                            line: no,
                            reason: e.to_string(),
                        }
                    })?;
                    turn.tool_response = Some(response);
                }
                other => {
                    return Err(TranscriptParseError::BadToolBlock {
                        line: no,
                        reason: format!("unknown fence kind {other:?}"),
                    })
                }
            }
            continue;
        }
        if let Some((speaker, utterance)) = speaker_line(trimmed) {
            turns.push(ConversationTurn {
                speaker,
                text: utterance.to_string(),
                tool_call: None,
                tool_response: None,
                section: titles.len().checked_sub(1),
            });
            continue;
        }
        match turns.last_mut() {
            Some(turn) => {
                if !turn.text.is_empty() {
                    turn.text.push(' ');
                }
                turn.text.push_str(trimmed);
            }
            _ => return Err(TranscriptParseError::TextOutsideTurn { line: no }),
        }
    }

    if turns.is_empty() {
        return Err(TranscriptParseError::NoTurns);
    }
    Ok((titles, turns))
}

/// Renders a record back into the transcript grammar.
pub fn render_transcript(record: &ConversationRecord) -> String {
    let mut out = String::new();
    let mut section = None;
    for turn in &record.turns {
        if turn.section != section {
            if let Some(i) = turn.section {
                out.push_str(&format!("## {}\n", record.section_titles[i]));
            }
            section = turn.section;
        }
        out.push_str(&format!("{}: {}\n", turn.speaker, turn.text));
        if let Some(call) = &turn.tool_call {
            out.push_str(&format_tool_block(call));
            out.push('\n');
        }
        if let Some(response) = &turn.tool_response {
            out.push_str(&format!("```response\n{}\n```\n", response.to_json()));
        }
    }
    out
}

fn mentions(text: &str, stem: &str) -> bool {
    text.to_lowercase().contains(stem)
}

/// Structural checks; an empty list means the record is valid.
pub fn validate_conversation(record: &ConversationRecord) -> Vec<Violation> {
    let turns = &record.turns;
    if turns.is_empty() {
        return vec![Violation::Empty];
    }
    let mut violations = Vec::new();
    if turns[0].speaker != Speaker::Trainer {
        violations.push(Violation::FirstSpeakerNotTrainer);
    }
    if let Some(i) = turns.windows(2).position(|w| w[0].speaker == w[1].speaker) {
        violations.push(Violation::NotAlternating { turn_index: i + 1 });
    }
    if record.section_titles.is_empty() {
        violations.push(Violation::MissingSectionTitles);
    }
    for section in 0..record.section_titles.len() {
        let engaged = turns
            .iter()
            .filter(|t| t.section == Some(section))
            .any(|t| {
                t.tool_call.is_some() || (t.speaker == Speaker::Trainee && t.text.contains('?'))
            });
        if !engaged {
            violations.push(Violation::SectionWithoutEngagement { section });
        }
    }
    let closing = turns.len() >= 4 && {
        let tail = &turns[turns.len() - 4..];
        let speakers: Vec<_> = tail.iter().map(|t| t.speaker).collect();
        speakers
            == [
                Speaker::Trainer,
                Speaker::Trainee,
                Speaker::Trainer,
                Speaker::Trainee,
            ]
            && mentions(&tail[0].text, ACCOMPLISH_STEM)
            && mentions(&tail[2].text, EXPERIENCE_STEM)
    };
    if !closing {
        violations.push(Violation::MissingClosingProtocol);
    }
    violations
}
