use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{ContextResponsePair, ConversationRecord, Speaker, VqaPair};
use crate::manual::InstructionManual;
use crate::metrics::tokenize;
use crate::sim::{tool_histogram, ToolUsage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenCount {
    pub token: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub conversations: usize,
    pub utterances: usize,
    pub tokens_total: usize,
    pub tokens_unique: usize,
    pub avg_utterances_per_conversation: f64,
    pub avg_tokens_trainer: f64,
    pub avg_tokens_trainee: f64,
    pub pairs: usize,
    pub avg_context_tokens: f64,
    pub avg_response_tokens: f64,
    /// Most frequent tokens per slice: instructions, entities,
    /// conversations and vqa.
    pub top_tokens: BTreeMap<String, Vec<TokenCount>>,
    pub tool_calls: BTreeMap<String, ToolUsage>,
}

fn mean(sum: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum as f64 / n as f64
    }
}

/// Highest counts first, ties broken alphabetically.
pub fn top_k<'a, I>(texts: I, k: usize) -> Vec<TokenCount>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut counts: HashMap<String, usize> = HashMap::new();
    for text in texts {
        for token in tokenize(text).into_tokens() {
            *counts.entry(token).or_default() += 1;
        }
    }
    let mut ranked: Vec<TokenCount> = counts
        .into_iter()
        .map(|(token, count)| TokenCount { token, count })
        .collect();
    ranked.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.token.cmp(&b.token)));
    ranked.truncate(k);
    ranked
}

pub fn dataset_stats(
    manuals: &[InstructionManual],
    records: &[ConversationRecord],
    pairs: &[ContextResponsePair],
    vqa: &[VqaPair],
    k: usize,
) -> DatasetStats {
    let turns: Vec<_> = records.iter().flat_map(|r| &r.turns).collect();
    let mut vocab = HashSet::new();
    let mut tokens_total = 0;
    let mut by_speaker: HashMap<Speaker, (usize, usize)> = HashMap::new();
    for turn in &turns {
        let tokens = tokenize(&turn.text).into_tokens();
        let entry = by_speaker.entry(turn.speaker).or_default();
        entry.0 += tokens.len();
        entry.1 += 1;
        tokens_total += tokens.len();
        vocab.extend(tokens);
    }
    let speaker_mean = |s| {
        let (sum, n) = by_speaker.get(&s).copied().unwrap_or_default();
        mean(sum, n)
    };
    let context_tokens: usize = pairs.iter().map(|p| tokenize(&p.context).len()).sum();
    let response_tokens: usize = pairs.iter().map(|p| tokenize(&p.response).len()).sum();

    let mut top_tokens = BTreeMap::new();
    top_tokens.insert(
        "instructions".to_string(),
        top_k(
            manuals
                .iter()
                .flat_map(|m| m.steps.iter().flat_map(|s| s.instructions.iter()))
                .map(String::as_str),
            k,
        ),
    );
    top_tokens.insert(
        "entities".to_string(),
        top_k(
            manuals
                .iter()
                .flat_map(|m| m.theme_entities.iter().map(|e| e.normalized.as_str())),
            k,
        ),
    );
    top_tokens.insert(
        "conversations".to_string(),
        top_k(turns.iter().map(|t| t.text.as_str()), k),
    );
    top_tokens.insert(
        "vqa".to_string(),
        top_k(vqa.iter().map(|v| v.query.as_str()), k),
    );

    DatasetStats {
        conversations: records.len(),
        utterances: turns.len(),
        tokens_total,
        tokens_unique: vocab.len(),
        avg_utterances_per_conversation: mean(turns.len(), records.len()),
        avg_tokens_trainer: speaker_mean(Speaker::Trainer),
        avg_tokens_trainee: speaker_mean(Speaker::Trainee),
        pairs: pairs.len(),
        avg_context_tokens: mean(context_tokens, pairs.len()),
        avg_response_tokens: mean(response_tokens, pairs.len()),
        top_tokens,
        tool_calls: tool_histogram(turns.iter().filter_map(|t| t.tool_call.as_ref())),
    }
}
