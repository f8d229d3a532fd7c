//! Synthetic dataset pipeline: simulated tool responses, grounded
//! conversations from a chat model, detection VQA pairs, context/response
//! pairs, a by-conversation split and corpus statistics.

mod prompts;
mod sampling;
mod stats;
mod transcript;

pub use prompts::{
    render_generation_query, render_generation_system_prompt, render_requirements_prompt,
    render_tool_response_line, REQUIREMENTS_PROMPT, TASK_BRIEF, TASK_FULL, TOOL_INTENT,
};
pub use sampling::{
    conversation_seed, sample_tools, simulate_tool_responses, MAX_TOOLS_PER_CONVERSATION,
};
pub use stats::{dataset_stats, top_k, DatasetStats, TokenCount};
pub use transcript::{
    parse_transcript, render_transcript, validate_conversation, ConversationRecord,
    ConversationTurn, Speaker, Transcript, TranscriptParseError, Violation,
};

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agent::LlmBackend;
use crate::backend::{BackendError, ChatMessage};
use crate::jsonl;
use crate::manual::{chunk_manual, InstructionManual, ManualChunk, DEFAULT_CHUNK_SIZE};
use crate::sim::{ToolCall, ToolResponse};
use crate::vision::{build_detection_query, parse_detection_output, VisionBackend};

pub const CONVERSATIONS_FILE: &str = "conversations.jsonl";
pub const PAIRS_FILE: &str = "pairs.jsonl";
pub const VQA_FILE: &str = "vqa.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum ForgeError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("conversation {conv_id}: {source}")]
    Transcript {
        conv_id: String,
        #[source]
        source: TranscriptParseError,
    },
    #[error("model returned no requirements")]
    EmptyOutput,
    #[error("test fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VqaPair {
    pub query: String,
    pub image_ref: String,
    pub answer: String,
    pub manual_id: String,
    pub step_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextResponsePair {
    pub conv_id: String,
    pub turn_index: usize,
    pub context: String,
    pub response: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub split: Split,
    #[serde(flatten)]
    pub pair: ContextResponsePair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRequirement {
    pub name: String,
    pub description: String,
}

/// Generates a conversation for one chunk and parses it. Tool calls the
/// model left without a result are filled from the simulated responses.
pub fn generate_conversation(
    conv_id: &str,
    chunk: &ManualChunk,
    responses: &[(ToolCall, ToolResponse)],
    llm: &dyn LlmBackend,
) -> Result<ConversationRecord, ForgeError> {
    let messages = [
        ChatMessage::system(render_generation_system_prompt()),
        ChatMessage::user(render_generation_query(chunk, responses)),
    ];
    let raw = llm.complete(&messages)?;
    let (section_titles, mut turns) =
        parse_transcript(&raw).map_err(|source| ForgeError::Transcript {
            conv_id: conv_id.to_string(),
            source,
        })?;
    let mut unused: Vec<&(ToolCall, ToolResponse)> = responses.iter().collect();
    for turn in &mut turns {
        let Some(call) = &turn.tool_call else {
            continue;
        };
        if let Some(i) = unused.iter().position(|(c, _)| c.name == call.name) {
            let (_, response) = unused.remove(i);
            if turn.tool_response.is_none() {
                turn.tool_response = Some(response.clone());
            }
        }
    }
    Ok(ConversationRecord {
        conv_id: conv_id.to_string(),
        manual_id: chunk.manual_id.clone(),
        chunk_index: chunk.chunk_index,
        section_titles,
        turns,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VqaBuild {
    pub pairs: Vec<VqaPair>,
    /// Steps whose answer did not parse or whose backend call failed.
    pub dropped: usize,
}

/// One detection pair per step that has an image.
pub fn build_vqa_dataset(manuals: &[InstructionManual], vlm: &dyn VisionBackend) -> VqaBuild {
    let mut build = VqaBuild::default();
    for manual in manuals {
        for step in &manual.steps {
            let Some(image_ref) = &step.image_ref else {
                continue;
            };
            let query = build_detection_query(step);
            let parsed = vlm
                .infer(&query, image_ref)
                .ok()
                .and_then(|raw| parse_detection_output(&raw).ok());
            match parsed {
                Some(detection) => build.pairs.push(VqaPair {
                    query,
                    image_ref: image_ref.clone(),
                    answer: detection.canonical(),
                    manual_id: manual.id.clone(),
                    step_index: step.index,
                }),
                None => build.dropped += 1,
            }
        }
    }
    build
}

/// One pair per Trainer turn that has at least one turn before it.
pub fn extract_pairs(records: &[ConversationRecord]) -> Vec<ContextResponsePair> {
    let mut pairs = Vec::new();
    for record in records {
        let lines: Vec<String> = record
            .turns
            .iter()
            .map(|t| format!("{}: {}", t.speaker, t.utterance()))
            .collect();
        for (i, turn) in record.turns.iter().enumerate().skip(1) {
            if turn.speaker != Speaker::Trainer {
                continue;
            }
            let response = turn.utterance();
            if response.trim().is_empty() {
                continue;
            }
            pairs.push(ContextResponsePair {
                conv_id: record.conv_id.clone(),
                turn_index: i,
                context: lines[..i].join("\n"),
                response,
            });
        }
    }
    pairs
}

/// Splits whole conversations into train and test. Conversations are
/// shuffled with `seed` and moved to test until it holds at least
/// `test_fraction` of the pairs; at least one stays in train. Both halves
/// keep the input order.
pub fn split_dataset(
    pairs: &[ContextResponsePair],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<ContextResponsePair>, Vec<ContextResponsePair>), ForgeError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(ForgeError::InvalidFraction(test_fraction));
    }
    let mut sizes: Vec<(&str, usize)> = Vec::new();
    let mut position: HashMap<&str, usize> = HashMap::new();
    for pair in pairs {
        let i = *position.entry(&pair.conv_id).or_insert_with(|| {
            sizes.push((&pair.conv_id, 0));
            sizes.len() - 1
        });
        sizes[i].1 += 1;
    }
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let target = test_fraction * pairs.len() as f64;
    let mut test_ids = BTreeSet::new();
    let mut taken = 0usize;
    for &i in &order {
        if (taken as f64) >= target || test_ids.len() + 1 >= sizes.len() {
            break;
        }
        test_ids.insert(sizes[i].0);
        taken += sizes[i].1;
    }
    let (test, train): (Vec<_>, Vec<_>) = pairs
        .iter()
        .cloned()
        .partition(|p| test_ids.contains(p.conv_id.as_str()));
    Ok((train, test))
}

fn strip_bullet(line: &str) -> Option<&str> {
    for marker in ["- ", "* ", "• "] {
        if let Some(rest) = line.strip_prefix(marker) {
            return Some(rest);
        }
    }
    let digits = line.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        let rest = &line[digits..];
        for marker in [". ", ") "] {
            if let Some(text) = rest.strip_prefix(marker) {
                return Some(text);
            }
        }
    }
    None
}

/// Bulleted or numbered lines of a model answer.
pub fn parse_bullets(text: &str) -> Vec<String> {
    text.lines()
        .filter_map(|l| strip_bullet(l.trim()))
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

pub fn generate_user_requirements(
    sample: &[InstructionManual],
    llm: &dyn LlmBackend,
) -> Result<Vec<String>, ForgeError> {
    let raw = llm.complete(&[ChatMessage::user(render_requirements_prompt(sample))])?;
    let requirements = parse_bullets(&raw);
    if requirements.is_empty() {
        return Err(ForgeError::EmptyOutput);
    }
    Ok(requirements)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgeConfig {
    pub seed: u64,
    pub chunk_size: usize,
    pub test_fraction: f64,
    pub conversations_per_chunk: usize,
}

impl Default for ForgeConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            chunk_size: DEFAULT_CHUNK_SIZE,
            test_fraction: 0.2,
            conversations_per_chunk: 1,
        }
    }
}

impl ForgeConfig {
    /// Hex SHA-256 of the config and the manual ids it ran over.
    pub fn hash(&self, manual_ids: &[String]) -> String {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(self).expect("config serializes"));
        for id in manual_ids {
            hasher.update([0]);
            hasher.update(id.as_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub conv_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestCounts {
    pub conversations: usize,
    pub utterances: usize,
    pub pairs: usize,
    pub vqa: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub counts: ManifestCounts,
    pub splits: SplitSizes,
    pub config_hash: String,
    pub seed: u64,
    pub chunk_size: usize,
    pub test_fraction: f64,
    pub conversations_per_chunk: usize,
    pub manual_ids: Vec<String>,
    /// Pair contexts hold the dialogue only, not the manual text.
    pub context_includes_manual: bool,
    pub vqa_dropped: usize,
    pub rejected: Vec<Rejection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForgeOutput {
    pub conversations: Vec<ConversationRecord>,
    pub pairs: Vec<PairRecord>,
    pub vqa: Vec<VqaPair>,
    pub manifest: DatasetManifest,
}

fn describe(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| serde_json::to_string(v).expect("violation serializes"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Runs the whole pipeline in memory. Conversations that fail to parse or
/// validate are left out and listed in the manifest; backend errors abort.
pub fn run_pipeline(
    manuals: &[InstructionManual],
    config: &ForgeConfig,
    llm: &dyn LlmBackend,
    vlm: &dyn VisionBackend,
) -> Result<ForgeOutput, ForgeError> {
    if !(config.test_fraction > 0.0 && config.test_fraction < 1.0) {
        return Err(ForgeError::InvalidFraction(config.test_fraction));
    }
    let mut conversations = Vec::new();
    let mut rejected = Vec::new();
    for manual in manuals {
        for chunk in chunk_manual(manual, config.chunk_size.max(1)) {
            for n in 0..config.conversations_per_chunk {
                let conv_id = format!("{}-{:03}-{n}", manual.id, chunk.chunk_index);
                let seed = conversation_seed(config.seed, &conv_id);
                let responses = simulate_tool_responses(seed, &chunk, Some(vlm));
                match generate_conversation(&conv_id, &chunk, &responses, llm) {
                    Ok(record) => {
                        let violations = validate_conversation(&record);
                        if violations.is_empty() {
                            conversations.push(record);
                        } else {
                            rejected.push(Rejection {
                                conv_id,
                                reason: describe(&violations),
                            });
                        }
                    }
                    Err(ForgeError::Transcript { source, .. }) => rejected.push(Rejection {
                        conv_id,
                        reason: source.to_string(),
                    }),
                    Err(other) => return Err(other),
                }
            }
        }
    }

    let pairs = extract_pairs(&conversations);
    let (train, test) = split_dataset(&pairs, config.test_fraction, config.seed)?;
    let test_keys: BTreeSet<(&str, usize)> = test
        .iter()
        .map(|p| (p.conv_id.as_str(), p.turn_index))
        .collect();
    let records: Vec<PairRecord> = pairs
        .iter()
        .map(|p| PairRecord {
            split: if test_keys.contains(&(p.conv_id.as_str(), p.turn_index)) {
                Split::Test
            } else {
                Split::Train
            },
            pair: p.clone(),
        })
        .collect();
    let vqa = build_vqa_dataset(manuals, vlm);
    let manual_ids: Vec<String> = manuals.iter().map(|m| m.id.clone()).collect();

    let manifest = DatasetManifest {
        counts: ManifestCounts {
            conversations: conversations.len(),
            utterances: conversations.iter().map(|c| c.turns.len()).sum(),
            pairs: pairs.len(),
            vqa: vqa.pairs.len(),
        },
        splits: SplitSizes {
            train: train.len(),
            test: test.len(),
        },
        config_hash: config.hash(&manual_ids),
        seed: config.seed,
        chunk_size: config.chunk_size,
        test_fraction: config.test_fraction,
        conversations_per_chunk: config.conversations_per_chunk,
        manual_ids,
        context_includes_manual: false,
        vqa_dropped: vqa.dropped,
        rejected,
    };
    Ok(ForgeOutput {
        conversations,
        pairs: records,
        vqa: vqa.pairs,
        manifest,
    })
}

fn write_file(path: &Path, contents: &[u8]) -> io::Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(contents)?;
    file.sync_all()
}

/// Writes the four output files into `dir`, creating it if needed.
pub fn write_outputs(dir: &Path, output: &ForgeOutput) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    write_file(
        &dir.join(CONVERSATIONS_FILE),
        jsonl::to_jsonl(&output.conversations).as_bytes(),
    )?;
    write_file(
        &dir.join(PAIRS_FILE),
        jsonl::to_jsonl(&output.pairs).as_bytes(),
    )?;
    write_file(&dir.join(VQA_FILE), jsonl::to_jsonl(&output.vqa).as_bytes())?;
    let mut manifest = serde_json::to_vec_pretty(&output.manifest).map_err(io::Error::other)?;
    manifest.push(b'\n');
    write_file(&dir.join(MANIFEST_FILE), &manifest)
}
