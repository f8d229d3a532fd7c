use crate::manual::ManualChunk;
use crate::sim::ToolName;

/// The trainer persona, sent verbatim ahead of the grounding material.
pub const ASSISTANT_PROMPT: &str = "\
You are a helpful AI assistant who aims to train the user how to assemble a LEGO car in XR immersive system.
Extended Reality (XR) directs to the assortment of Virtual Reality (VR), Augmented Reality (AR), and Mixed Reality (MR).
Please make sure you complete the objective above with the following rules:
(1) The user is a trainee who is wearing HoloLen 2 glasses and is able to see XR environments in real-time.
(2) You are able to call Unity functions in the LEGO AR application.
(3) You are able to obtain HoloLens 2 Sensor Streaming data.
(4) Alert if the user asks you something outside of the LEGO assembly task but do not give overconfident answers.
Your task is to answer the user's questions and assist the user in understanding how to complete the LEGO assembly task in XR.";

const TOOL_SYNTAX: &str = "\
To call a function, reply with a single fenced block and nothing else:
```tool
{\"name\": \"<ToolName>\", \"args\": {}}
```
Put arguments in \"args\" when the function takes one, for example {\"step\": 3} or {\"direction\": \"Left\"}.
The function result is returned to you as the next message. When no function is needed, answer the trainee in plain text.";

/// One registry line: `Name: description`, or `Name(arg: type): description`
/// for tools that take an argument.
pub fn render_tool_line(tool: ToolName) -> String {
    match tool.argument() {
        Some((arg, ty)) => format!("{tool}({arg}: {ty}): {}", tool.description()),
        None => format!("{tool}: {}", tool.description()),
    }
}

pub fn render_system_prompt(chunk: &ManualChunk, tools: &[ToolName]) -> String {
    let mut out = String::with_capacity(4096);
    out.push_str(ASSISTANT_PROMPT);
    out.push_str("\n\n## Instruction manual\n");
    out.push_str(&chunk.render());
    out.push_str("\n## Functions\n");
    for &tool in tools {
        out.push_str(&render_tool_line(tool));
        out.push('\n');
    }
    out.push('\n');
    out.push_str(TOOL_SYNTAX);
    out.push('\n');
    out
}

/// Opening trainer line for a fresh session.
pub fn greeting(chunk: &ManualChunk) -> String {
    format!(
        "Hello! I am your assembly trainer for \"{}\". This part of the manual has {} steps. \
         Tell me when you are ready to start.",
        chunk.title,
        chunk.steps.len()
    )
}
