use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::sim::{ToolCall, ToolName};

const FENCE: &str = "```";
const TOOL_FENCE: &str = "```tool";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VlmTask {
    ObjectDetection,
    AssemblyState,
}

/// What the trainer decided to do after one completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentAction {
    Respond { text: String },
    CallTool { call: ToolCall },
    CallVlm { task: VlmTask, call: ToolCall },
}

impl AgentAction {
    pub fn tool_call(&self) -> Option<&ToolCall> {
        match self {
            AgentAction::Respond { .. } => None,
            AgentAction::CallTool { call } | AgentAction::CallVlm { call, .. } => Some(call),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed tool block: {0}")]
pub struct MalformedToolBlock(pub String);

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCall {
    name: String,
    #[serde(default)]
    args: Map<String, Value>,
}

fn find_tool_block(text: &str) -> Option<Result<&str, MalformedToolBlock>> {
    let mut from = 0;
    while let Some(pos) = text[from..].find(TOOL_FENCE) {
        let start = from + pos + TOOL_FENCE.len();
        let rest = &text[start..];
        // "```toolbox" is some other fence.
        if rest.starts_with(|c: char| c.is_alphanumeric() || c == '_' || c == '-') {
            from = start;
            continue;
        }
        return Some(match rest.find(FENCE) {
            Some(end) => Ok(rest[..end].trim()),
            None => Err(MalformedToolBlock("unterminated ```tool fence".into())),
        });
    }
    None
}

/// Reads the first ```` ```tool ```` block, if any. Output without a block is
/// a plain response.
pub fn parse_action(output: &str) -> Result<AgentAction, MalformedToolBlock> {
    let body = match find_tool_block(output) {
        None => {
            return Ok(AgentAction::Respond {
                text: output.trim().to_string(),
            })
        }
        Some(block) => block?,
    };
    let raw: RawCall =
        serde_json::from_str(body).map_err(|e| MalformedToolBlock(format!("invalid JSON: {e}")))?;
    let name: ToolName = raw
        .name
        .parse()
        .map_err(|e| MalformedToolBlock(format!("{e}")))?;
    let call = ToolCall {
        name,
        args: raw.args,
    };
    Ok(match name {
        ToolName::APICallObjectRecognitionAR => AgentAction::CallVlm {
            task: VlmTask::ObjectDetection,
            call,
        },
        ToolName::APICallCheckStepStatusAR => AgentAction::CallVlm {
            task: VlmTask::AssemblyState,
            call,
        },
        _ => AgentAction::CallTool { call },
    })
}

/// Wraps a call in the fenced syntax `parse_action` accepts.
pub fn format_tool_block(call: &ToolCall) -> String {
    let json = serde_json::json!({"name": call.name.as_str(), "args": call.args});
    format!("{TOOL_FENCE}\n{json}\n{FENCE}")
}
