//! Instruction manuals: the grounding documents for the trainer agent,
//! the simulator and the dataset pipeline.
//!
//! Manuals are stored one-per-file as JSON. Theme entities are marked up
//! inline with `[[...]]` inside the summary and instruction sentences; the
//! parsed [`InstructionManual`] keeps plain text plus character spans, and
//! [`InstructionManual::to_json`] re-inserts the markup.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::tokenize;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_CHUNK_SIZE: usize = 10;

const OPEN: &str = "[[";
const CLOSE: &str = "]]";

#[derive(Debug, Error)]
pub enum ManualError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("manual has no steps")]
    EmptyManual,
    #[error("no manual files found in {0}")]
    EmptyCorpus(PathBuf),
    #[error("duplicate manual id `{0}`")]
    DuplicateId(String),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<ManualError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Where a theme entity was highlighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityLocation {
    Summary,
    Step { index: u32, sentence: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThemeEntity {
    pub surface: String,
    pub normalized: String,
    pub location: EntityLocation,
    /// Character offsets `[start, end)` into the plain (markup-free) text.
    pub span: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepInstruction {
    pub index: u32,
    pub instructions: Vec<String>,
    pub image_ref: Option<String>,
    pub piece_ids: Vec<String>,
}

impl StepInstruction {
    /// All instruction sentences joined by a single space.
    pub fn text(&self) -> String {
        self.instructions.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionManual {
    pub id: String,
    pub title: String,
    pub summary: String,
    pub steps: Vec<StepInstruction>,
    pub theme_entities: Vec<ThemeEntity>,
}

/// A summary plus a window of consecutive steps; the grounding unit for one
/// conversation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManualChunk {
    pub manual_id: String,
    pub title: String,
    pub chunk_index: usize,
    pub summary: String,
    pub steps: Vec<StepInstruction>,
}

impl ManualChunk {
    /// Renders the chunk as prompt text: summary then one line per step.
    pub fn render(&self) -> String {
        let mut out = format!("Title: {}\nSummary: {}\n", self.title, self.summary);
        for step in &self.steps {
            out.push_str(&format!("Step {}: {}\n", step.index, step.text()));
        }
        out
    }

    /// The chunk viewed as a self-contained manual, steps renumbered from 1.
    pub fn as_manual(&self) -> InstructionManual {
        let steps = self
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| StepInstruction {
                index: i as u32 + 1,
                ..s.clone()
            })
            .collect();
        InstructionManual {
            id: self.manual_id.clone(),
            title: self.title.clone(),
            summary: self.summary.clone(),
            steps,
            theme_entities: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub manual_count: usize,
    pub total_steps: usize,
    pub total_tokens: usize,
    pub unique_tokens: usize,
    pub theme_entity_count: usize,
    pub theme_mentions: usize,
    pub avg_steps_per_manual: f64,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawManual {
    #[serde(default = "default_version")]
    schema_version: u32,
    id: String,
    title: String,
    summary: String,
    steps: Vec<RawStep>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawStep {
    index: i64,
    instructions: Vec<String>,
    #[serde(default)]
    image_ref: Option<String>,
    #[serde(default)]
    piece_ids: Vec<String>,
}

fn default_version() -> u32 {
    SCHEMA_VERSION
}

/// Case-folds and collapses internal whitespace.
pub fn normalize_entity(surface: &str) -> String {
    surface
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

type Marked = Vec<(String, (usize, usize))>;

/// Removes `[[...]]` markup, returning the plain text and the highlighted
/// surfaces with their character spans in the plain text.
fn strip_markup(text: &str) -> Result<(String, Marked), ManualError> {
    let mut plain = String::with_capacity(text.len());
    let mut plain_chars = 0usize;
    let mut found = Vec::new();
    let mut rest = text;
    loop {
        let open = rest.find(OPEN);
        let close = rest.find(CLOSE);
        match (open, close) {
            (None, None) => {
                plain.push_str(rest);
                break;
            }
            (None, Some(_)) => {
                return Err(ManualError::Schema(format!("unbalanced `]]` in {text:?}")))
            }
            (Some(o), Some(c)) if c < o => {
                return Err(ManualError::Schema(format!("unbalanced `]]` in {text:?}")))
            }
            (Some(o), _) => {
                let before = &rest[..o];
                plain.push_str(before);
                plain_chars += before.chars().count();
                let inner_rest = &rest[o + OPEN.len()..];
                let end = inner_rest
                    .find(CLOSE)
                    .ok_or_else(|| ManualError::Schema(format!("unclosed `[[` in {text:?}")))?;
                let inner = &inner_rest[..end];
                if inner.contains(OPEN) {
                    return Err(ManualError::Schema(format!("nested `[[` in {text:?}")));
                }
                if inner.trim().is_empty() {
                    return Err(ManualError::Schema(format!("empty entity in {text:?}")));
                }
                let len = inner.chars().count();
                found.push((inner.to_string(), (plain_chars, plain_chars + len)));
                plain.push_str(inner);
                plain_chars += len;
                rest = &inner_rest[end + CLOSE.len()..];
            }
        }
    }
    Ok((plain, found))
}

fn insert_markup(plain: &str, spans: &[(usize, usize)]) -> String {
    let mut opens = spans.iter().map(|s| s.0).peekable();
    let mut closes = spans.iter().map(|s| s.1).peekable();
    let mut out = String::with_capacity(plain.len() + spans.len() * 4);
    for (i, ch) in plain.chars().enumerate() {
        while closes.peek() == Some(&i) {
            out.push_str(CLOSE);
            closes.next();
        }
        while opens.peek() == Some(&i) {
            out.push_str(OPEN);
            opens.next();
        }
        out.push(ch);
    }
    for _ in closes {
        out.push_str(CLOSE);
    }
    out
}

/// Parses and validates one manual document.
pub fn parse_manual(document: &str) -> Result<InstructionManual, ManualError> {
    let raw: RawManual =
        serde_json::from_str(document).map_err(|e| ManualError::Schema(e.to_string()))?;
    from_raw(raw)
}

fn from_raw(raw: RawManual) -> Result<InstructionManual, ManualError> {
    if raw.schema_version != SCHEMA_VERSION {
        return Err(ManualError::Schema(format!(
            "unsupported schema_version {}",
            raw.schema_version
        )));
    }
    if raw.id.trim().is_empty() {
        return Err(ManualError::Schema("empty id".into()));
    }
    if raw.steps.is_empty() {
        return Err(ManualError::EmptyManual);
    }

    let mut entities = Vec::new();
    let mut push_entities = |found: Vec<(String, (usize, usize))>, location| {
        for (surface, span) in found {
            entities.push(ThemeEntity {
                normalized: normalize_entity(&surface),
                surface,
                location,
                span,
            });
        }
    };

    let (summary, found) = strip_markup(&raw.summary)?;
    push_entities(found, EntityLocation::Summary);

    let mut steps = Vec::with_capacity(raw.steps.len());
    for (pos, raw_step) in raw.steps.into_iter().enumerate() {
        let expected = pos as i64 + 1;
        if raw_step.index != expected {
            return Err(ManualError::Schema(format!(
                "non-contiguous step indices: expected {expected}, found {}",
                raw_step.index
            )));
        }
        if raw_step.instructions.is_empty() {
            return Err(ManualError::Schema(format!(
                "step {expected} has no instructions"
            )));
        }
        let index = expected as u32;
        let mut instructions = Vec::with_capacity(raw_step.instructions.len());
        for (sentence, text) in raw_step.instructions.iter().enumerate() {
            let (plain, found) = strip_markup(text)?;
            push_entities(found, EntityLocation::Step { index, sentence });
            instructions.push(plain);
        }
        steps.push(StepInstruction {
            index,
            instructions,
            image_ref: raw_step.image_ref,
            piece_ids: raw_step.piece_ids,
        });
    }

    Ok(InstructionManual {
        id: raw.id,
        title: raw.title,
        summary,
        steps,
        theme_entities: entities,
    })
}

impl InstructionManual {
    pub fn step(&self, index: u32) -> Option<&StepInstruction> {
        index
            .checked_sub(1)
            .and_then(|i| self.steps.get(i as usize))
    }

    fn marked_up(&self, text: &str, location: EntityLocation) -> String {
        let spans: Vec<_> = self
            .theme_entities
            .iter()
            .filter(|e| e.location == location)
            .map(|e| e.span)
            .collect();
        insert_markup(text, &spans)
    }

    /// Serializes back to the on-disk document format (markup restored).
    pub fn to_json(&self) -> String {
        let raw = RawManual {
            schema_version: SCHEMA_VERSION,
            id: self.id.clone(),
            title: self.title.clone(),
            summary: self.marked_up(&self.summary, EntityLocation::Summary),
            steps: self
                .steps
                .iter()
                .map(|s| RawStep {
                    index: s.index as i64,
                    instructions: s
                        .instructions
                        .iter()
                        .enumerate()
                        .map(|(sentence, text)| {
                            self.marked_up(
                                text,
                                EntityLocation::Step {
                                    index: s.index,
                                    sentence,
                                },
                            )
                        })
                        .collect(),
                    image_ref: s.image_ref.clone(),
                    piece_ids: s.piece_ids.clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&raw).expect("manual serializes")
    }

    /// Summary followed by every instruction sentence, in order.
    pub fn texts(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.summary.as_str()).chain(
            self.steps
                .iter()
                .flat_map(|s| s.instructions.iter().map(String::as_str)),
        )
    }
}

/// Splits a manual into windows of at most `chunk_size` consecutive steps.
///
/// Panics if `chunk_size` is zero.
pub fn chunk_manual(manual: &InstructionManual, chunk_size: usize) -> Vec<ManualChunk> {
    assert!(chunk_size >= 1, "chunk_size must be at least 1");
    manual
        .steps
        .chunks(chunk_size)
        .enumerate()
        .map(|(chunk_index, steps)| ManualChunk {
            manual_id: manual.id.clone(),
            title: manual.title.clone(),
            chunk_index,
            summary: manual.summary.clone(),
            steps: steps.to_vec(),
        })
        .collect()
}

/// Sorted, deduplicated normalized theme entities across `manuals`.
pub fn extract_theme_lexicon(manuals: &[InstructionManual]) -> Vec<String> {
    manuals
        .iter()
        .flat_map(|m| m.theme_entities.iter().map(|e| e.normalized.clone()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

pub fn corpus_stats(manuals: &[InstructionManual]) -> CorpusStats {
    let mut total_tokens = 0;
    let mut vocab = BTreeSet::new();
    for text in manuals.iter().flat_map(InstructionManual::texts) {
        let tokens = tokenize(text);
        total_tokens += tokens.len();
        vocab.extend(tokens.into_tokens());
    }
    let total_steps: usize = manuals.iter().map(|m| m.steps.len()).sum();
    let manual_count = manuals.len();
    CorpusStats {
        manual_count,
        total_steps,
        total_tokens,
        unique_tokens: vocab.len(),
        theme_entity_count: extract_theme_lexicon(manuals).len(),
        theme_mentions: manuals.iter().map(|m| m.theme_entities.len()).sum(),
        avg_steps_per_manual: if manual_count == 0 {
            0.0
        } else {
            total_steps as f64 / manual_count as f64
        },
    }
}

/// Loads every `*.json` manual under `dir`, sorted by file name.
pub fn load_manual_dir(dir: &Path) -> Result<Vec<InstructionManual>, ManualError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(ManualError::EmptyCorpus(dir.to_path_buf()));
    }
    let mut seen = BTreeSet::new();
    let mut manuals = Vec::with_capacity(paths.len());
    for path in paths {
        let wrap = |source| ManualError::File {
            path: path.clone(),
            source: Box::new(source),
        };
        let text = fs::read_to_string(&path).map_err(|e| wrap(e.into()))?;
        let manual = parse_manual(&text).map_err(wrap)?;
        if !seen.insert(manual.id.clone()) {
            return Err(wrap(ManualError::DuplicateId(manual.id)));
        }
        manuals.push(manual);
    }
    Ok(manuals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn toy_manual(n: usize) -> String {
        let steps: Vec<_> = (1..=n)
            .map(|i| {
                serde_json::json!({
                    "index": i,
                    "instructions": [format!("Attach the [[plate 1x2]] to part {i}.")],
                    "image_ref": format!("img/{i}.png"),
                    "piece_ids": [format!("p{i}")],
                })
            })
            .collect();
        serde_json::json!({
            "id": "toy",
            "title": "Toy",
            "summary": "Build the [[Upper  Body]] and legs.",
            "steps": steps,
        })
        .to_string()
    }

    #[test]
    fn parses_three_step_manual() {
        let m = parse_manual(&toy_manual(3)).unwrap();
        assert_eq!(
            m.steps.iter().map(|s| s.index).collect::<Vec<_>>(),
            [1, 2, 3]
        );
        assert_eq!(m.summary, "Build the Upper  Body and legs.");
        assert_eq!(m.theme_entities[0].normalized, "upper body");
        assert_eq!(m.theme_entities[0].span, (10, 21));
        assert_eq!(
            m.steps[0].instructions[0],
            "Attach the plate 1x2 to part 1."
        );
    }

    #[test]
    fn rejects_non_contiguous_indices() {
        let doc = r#"{"id":"x","title":"t","summary":"s","steps":[
            {"index":1,"instructions":["a"],"image_ref":null,"piece_ids":[]},
            {"index":3,"instructions":["b"],"image_ref":null,"piece_ids":[]}]}"#;
        let err = parse_manual(doc).unwrap_err();
        assert!(matches!(err, ManualError::Schema(ref m) if m.contains("non-contiguous")));
    }

    #[test]
    fn rejects_empty_and_malformed() {
        let empty = r#"{"id":"x","title":"t","summary":"s","steps":[]}"#;
        assert!(matches!(parse_manual(empty), Err(ManualError::EmptyManual)));
        let missing = r#"{"id":"x","summary":"s","steps":[]}"#;
        assert!(matches!(parse_manual(missing), Err(ManualError::Schema(_))));
        for bad in ["[[open", "close]]", "[[a [[b]] c]]", "[[  ]]"] {
            let doc = serde_json::json!({"id":"x","title":"t","summary":bad,
                "steps":[{"index":1,"instructions":["a"]}]});
            assert!(
                matches!(parse_manual(&doc.to_string()), Err(ManualError::Schema(_))),
                "{bad}"
            );
        }
        let no_sentences =
            r#"{"id":"x","title":"t","summary":"s","steps":[{"index":1,"instructions":[]}]}"#;
        assert!(matches!(
            parse_manual(no_sentences),
            Err(ManualError::Schema(_))
        ));
    }

    #[test]
    fn chunking_examples() {
        let sizes = |n: usize| {
            let m = parse_manual(&toy_manual(n)).unwrap();
            chunk_manual(&m, DEFAULT_CHUNK_SIZE)
                .iter()
                .map(|c| c.steps.len())
                .collect::<Vec<_>>()
        };
        assert_eq!(sizes(10), [10]);
        assert_eq!(sizes(23), [10, 10, 3]);
        assert_eq!(sizes(215).len(), 22);
        assert_eq!(sizes(4), [4]);
    }

    #[test]
    fn lexicon_dedups_within_and_across_manuals() {
        let a = parse_manual(&toy_manual(3)).unwrap();
        let mut b = parse_manual(&toy_manual(1)).unwrap();
        b.id = "other".into();
        let lex = extract_theme_lexicon(&[a.clone(), b]);
        assert_eq!(lex, ["plate 1x2", "upper body"]);
        assert_eq!(
            extract_theme_lexicon(std::slice::from_ref(&a)),
            extract_theme_lexicon(&[a])
        );
    }

    #[test]
    fn stats_small_cases() {
        let m = parse_manual(&toy_manual(3)).unwrap();
        let s = corpus_stats(std::slice::from_ref(&m));
        assert_eq!((s.manual_count, s.total_steps), (1, 3));
        let two = [
            parse_manual(&toy_manual(2)).unwrap(),
            parse_manual(&toy_manual(2)).unwrap(),
        ];
        assert_eq!(corpus_stats(&two).avg_steps_per_manual, 2.0);
    }

    fn arb_sentence() -> impl Strategy<Value = String> {
        prop::collection::vec(
            prop_oneof![
                "[a-zA-Z0-9]{1,8}".prop_map(|w| w),
                "[a-z]{1,6}( [a-z0-9]{1,4})?".prop_map(|w| format!("[[{w}]]")),
            ],
            1..6,
        )
        .prop_map(|ws| ws.join(" "))
    }

    fn arb_document() -> impl Strategy<Value = String> {
        (
            arb_sentence(),
            prop::collection::vec(
                (
                    prop::collection::vec(arb_sentence(), 1..3),
                    prop::option::of("[a-z]{1,5}\\.png"),
                ),
                1..30,
            ),
        )
            .prop_map(|(summary, steps)| {
                let steps: Vec<_> = steps
                    .into_iter()
                    .enumerate()
                    .map(|(i, (instructions, image_ref))| {
                        serde_json::json!({"index": i + 1, "instructions": instructions,
                            "image_ref": image_ref, "piece_ids": []})
                    })
                    .collect();
                serde_json::json!({"id":"p","title":"T","summary":summary,"steps":steps})
                    .to_string()
            })
    }

    proptest! {
        #[test]
        fn chunking_is_a_partition(doc in arb_document(), size in 1usize..12) {
            let m = parse_manual(&doc).unwrap();
            let chunks = chunk_manual(&m, size);
            prop_assert_eq!(chunks.len(), m.steps.len().div_ceil(size));
            prop_assert!(chunks.iter().all(|c| c.summary == m.summary && c.steps.len() <= size));
            let joined: Vec<_> = chunks.into_iter().flat_map(|c| c.steps).collect();
            prop_assert_eq!(joined, m.steps);
        }

        #[test]
        fn parse_serialize_parse_is_identity(doc in arb_document()) {
            let m = parse_manual(&doc).unwrap();
            let again = parse_manual(&m.to_json()).unwrap();
            prop_assert_eq!(again, m);
        }
    }
}
