use std::sync::Arc;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::manual::ManualChunk;
use crate::sim::{AssemblySession, Direction, ToolCall, ToolName, ToolResponse};
use crate::vision::VisionBackend;

pub const MAX_TOOLS_PER_CONVERSATION: usize = 6;

/// Seed of one conversation's RNG stream, derived from the run seed and the
/// conversation id so streams do not depend on generation order.
pub fn conversation_seed(master: u64, conv_id: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(conv_id.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Draws k uniform on 1..=6, then k distinct tools.
pub fn sample_tools<R: Rng>(rng: &mut R) -> Vec<ToolName> {
    let k = rng.random_range(1..=MAX_TOOLS_PER_CONVERSATION);
    index::sample(rng, ToolName::ALL.len(), k)
        .into_iter()
        .map(|i| ToolName::ALL[i])
        .collect()
}

fn call_for<R: Rng>(tool: ToolName, total_steps: u32, rng: &mut R) -> ToolCall {
    match tool {
        ToolName::GoToStep => ToolCall::go_to_step(rng.random_range(1..=total_steps.max(1)) as i64),
        ToolName::Rotate => ToolCall::rotate(Direction::ALL[rng.random_range(0..4)]),
        _ => ToolCall::new(tool),
    }
}

/// Brings a fresh session to a state where `tool` can succeed.
fn prologue(session: &mut AssemblySession, tool: ToolName) {
    let total = session.state().total_steps;
    if tool != ToolName::StartAssemble {
        session.dispatch(&ToolCall::new(ToolName::StartAssemble), None);
    }
    match tool {
        ToolName::FrontStep if total > 1 => {
            session.dispatch(&ToolCall::go_to_step(2), None);
        }
        ToolName::Recover => {
            session.dispatch(&ToolCall::new(ToolName::Explode), None);
        }
        ToolName::FinishedVideo => {
            for step in 1..=total {
                session
                    .set_step_completed(step as i64, true)
                    .expect("step in range");
            }
        }
        ToolName::CheckStepStatusVR => {
            session.set_step_completed(1, true).expect("step 1 exists");
        }
        _ => {}
    }
}

/// Samples the tools of one conversation and records what each returns
/// when run in its own scratch session.
pub fn simulate_tool_responses(
    seed: u64,
    chunk: &ManualChunk,
    vlm: Option<&dyn VisionBackend>,
) -> Vec<(ToolCall, ToolResponse)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let manual = Arc::new(chunk.as_manual());
    let total = manual.steps.len() as u32;
    sample_tools(&mut rng)
        .into_iter()
        .map(|tool| {
            let call = call_for(tool, total, &mut rng);
            let mut scratch = AssemblySession::new("scratch", Arc::clone(&manual));
            prologue(&mut scratch, tool);
            let response = scratch.dispatch(&call, vlm);
            (call, response)
        })
        .collect()
}
