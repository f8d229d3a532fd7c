//! Vision-language sub-agent: object detection (T1) and assembly-state
//! matching (T2) queries against a pluggable backend, and parsing of the
//! backend's free-text answers.
//!
//! Detection answers follow `<label> <x_left> <y_top> <x_right> <y_bottom>`.
//! Real VLM output wraps that in chatter, so the parser takes the first
//! window of four integers preceded by a label. The label is the run of
//! words directly before the integers, stopping at a line break or at a
//! word ending in sentence punctuation (`. ! ? : ; ,`). In a run of more
//! than four integers the first four form the box, so a digit-only word
//! next to the coordinates is never part of the label. MiniGPT-v2 style
//! `<p>label</p> {<x><y><x><y>}` output is accepted too.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, ChatMessage, HttpChatClient, HttpConfig};
use crate::manual::StepInstruction;

pub const DETECTION_TOKEN: &str = "[detection]";
pub const VERIFY_TOKEN: &str = "[verify]";

#[derive(Debug, Clone, Error, PartialEq)]
pub enum VisionError {
    #[error("no `<label> <x> <y> <x> <y>` pattern in output")]
    NoDetectionFound,
    #[error("degenerate box ({x_left}, {y_top}, {x_right}, {y_bottom})")]
    DegenerateBox {
        x_left: i64,
        y_top: i64,
        x_right: i64,
        y_bottom: i64,
    },
    #[error("no leading yes/no in verdict {0:?}")]
    UnparseableVerdict(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_left: u32,
    pub y_top: u32,
    pub x_right: u32,
    pub y_bottom: u32,
}

impl BoundingBox {
    pub fn new(x_left: i64, y_top: i64, x_right: i64, y_bottom: i64) -> Result<Self, VisionError> {
        let degenerate = || VisionError::DegenerateBox {
            x_left,
            y_top,
            x_right,
            y_bottom,
        };
        let coord = |v: i64| u32::try_from(v).map_err(|_| degenerate());
        let b = BoundingBox {
            x_left: coord(x_left)?,
            y_top: coord(y_top)?,
            x_right: coord(x_right)?,
            y_bottom: coord(y_bottom)?,
        };
        if b.x_left < b.x_right && b.y_top < b.y_bottom {
            Ok(b)
        } else {
            Err(degenerate())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub object_label: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub raw_output: String,
}

impl DetectionResult {
    /// Canonical `<label> <x_left> <y_top> <x_right> <y_bottom>` form.
    pub fn canonical(&self) -> String {
        let b = &self.bbox;
        format!(
            "{} {} {} {} {}",
            self.object_label, b.x_left, b.y_top, b.x_right, b.y_bottom
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchVerdict {
    pub matches: bool,
    pub rationale: String,
}

/// A vision-language model: answers a text query about an image.
pub trait VisionBackend: Send + Sync {
    fn infer(&self, query: &str, image_ref: &str) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    pub query_contains: String,
    /// Exact image reference, or `*` for any.
    pub image_ref: String,
    pub output: String,
}

/// Deterministic backend answering from an ordered rule list; first match wins.
#[derive(Debug, Clone, Default)]
pub struct MockVisionBackend {
    rules: Vec<MockRule>,
}

impl MockVisionBackend {
    pub fn new(rules: Vec<MockRule>) -> Self {
        Self { rules }
    }

    pub fn from_json(text: &str) -> Result<Self, BackendError> {
        serde_json::from_str(text)
            .map(Self::new)
            .map_err(|e| BackendError::Config(format!("mock vision rules: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn rules(&self) -> &[MockRule] {
        &self.rules
    }
}

impl VisionBackend for MockVisionBackend {
    fn infer(&self, query: &str, image_ref: &str) -> Result<String, BackendError> {
        self.rules
            .iter()
            .find(|r| {
                query.contains(&r.query_contains)
                    && (r.image_ref == "*" || r.image_ref == image_ref)
            })
            .map(|r| r.output.clone())
            .ok_or_else(|| BackendError::NoScriptedOutput {
                query: query.to_string(),
                image_ref: image_ref.to_string(),
            })
    }
}

/// VLM reached over the chat-completions wire contract; the image reference
/// travels inline as `<Img>ref</Img>` ahead of the query.
#[derive(Debug)]
pub struct HttpVisionBackend {
    client: HttpChatClient,
}

impl HttpVisionBackend {
    pub fn new(config: &HttpConfig) -> Result<Self, BackendError> {
        Ok(Self {
            client: HttpChatClient::new(config)?,
        })
    }
}

impl VisionBackend for HttpVisionBackend {
    fn infer(&self, query: &str, image_ref: &str) -> Result<String, BackendError> {
        self.client
            .complete(&[ChatMessage::user(format!("<Img>{image_ref}</Img> {query}"))])
    }
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// `[detection]` followed by the step's first instruction sentence.
pub fn build_detection_query(step: &StepInstruction) -> String {
    let sentence = step.instructions.first().map(String::as_str).unwrap_or("");
    format!("{DETECTION_TOKEN} {}", collapse_ws(sentence))
}

pub fn build_verification_query(step: &StepInstruction) -> String {
    format!(
        "{VERIFY_TOKEN} Reference state for step {}: {} Does the assembly in the image match this reference state? Answer yes or no first, then explain.",
        step.index,
        collapse_ws(&step.text())
    )
}

#[derive(Debug)]
enum Tok<'a> {
    Int(i64),
    Word { text: &'a str, ends_clause: bool },
    Break,
}

const CLAUSE_END: [char; 6] = ['.', '!', '?', ':', ';', ','];

fn lex(text: &str) -> Vec<Tok<'_>> {
    let mut toks = Vec::new();
    for line in text.lines() {
        for word in line.split_whitespace() {
            let bare = word.trim_end_matches([',', ';', '.']);
            let digits = bare.strip_prefix('-').unwrap_or(bare);
            let int = (!digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()))
                .then(|| bare.parse::<i64>().ok())
                .flatten();
            toks.push(match int {
                Some(v) => Tok::Int(v),
                None if word.starts_with('[') && word.ends_with(']') => Tok::Break,
                None => Tok::Word {
                    text: word,
                    ends_clause: word.ends_with(CLAUSE_END),
                },
            });
        }
        toks.push(Tok::Break);
    }
    toks
}

fn label_before<'a>(toks: &[Tok<'a>]) -> Option<String> {
    let mut words: Vec<&'a str> = Vec::new();
    for (k, tok) in toks.iter().rev().enumerate() {
        match tok {
            Tok::Word { text, ends_clause } => {
                if *ends_clause && k > 0 {
                    break;
                }
                words.push(text);
            }
            _ => break,
        }
    }
    words.reverse();
    let label = words.join(" ");
    let label = label.trim_matches(|c: char| !c.is_alphanumeric());
    (!label.is_empty()).then(|| label.to_string())
}

/// Extracts the first `<label> <int> <int> <int> <int>` pattern from `raw`.
pub fn parse_detection_output(raw: &str) -> Result<DetectionResult, VisionError> {
    let cleaned = raw
        .replace("<p>", "\n")
        .replace("</p>", " ")
        .replace(['<', '>', '{', '}'], " ");
    let toks = lex(&cleaned);
    for i in 1..toks.len().saturating_sub(3) {
        let window = &toks[i..i + 4];
        let coords: Vec<i64> = window
            .iter()
            .filter_map(|t| match t {
                Tok::Int(v) => Some(*v),
                _ => None,
            })
            .collect();
        if coords.len() != 4 || !matches!(toks[i - 1], Tok::Word { .. }) {
            continue;
        }
        let Some(label) = label_before(&toks[..i]) else {
            continue;
        };
        let bbox = BoundingBox::new(coords[0], coords[1], coords[2], coords[3])?;
        return Ok(DetectionResult {
            object_label: label,
            bbox,
            raw_output: raw.to_string(),
        });
    }
    Err(VisionError::NoDetectionFound)
}

/// Reads a leading yes/no (case-insensitive); the remainder is the rationale.
pub fn parse_verdict(raw: &str) -> Result<MatchVerdict, VisionError> {
    let trimmed = raw.trim_start();
    let (head, rest) = trimmed
        .split_once(char::is_whitespace)
        .unwrap_or((trimmed, ""));
    let word = head
        .trim_matches(|c: char| !c.is_alphabetic())
        .to_lowercase();
    let matches = match word.as_str() {
        "yes" => true,
        "no" => false,
        _ => return Err(VisionError::UnparseableVerdict(raw.to_string())),
    };
    let rationale = rest
        .trim()
        .trim_start_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
        .to_string();
    Ok(MatchVerdict { matches, rationale })
}

/// T1: locate the object named by the step's first instruction.
pub fn detect_object(
    step: &StepInstruction,
    image_ref: &str,
    backend: &dyn VisionBackend,
) -> Result<DetectionResult, VisionError> {
    let raw = backend.infer(&build_detection_query(step), image_ref)?;
    parse_detection_output(&raw)
}

/// T2: does the pictured assembly match the reference step?
pub fn check_assembly_state(
    image_ref: &str,
    reference_step: &StepInstruction,
    backend: &dyn VisionBackend,
) -> Result<MatchVerdict, VisionError> {
    let raw = backend.infer(&build_verification_query(reference_step), image_ref)?;
    parse_verdict(&raw)
}
