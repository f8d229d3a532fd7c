use crate::manual::{InstructionManual, ManualChunk};
use crate::sim::{ToolCall, ToolName, ToolResponse};

use crate::agent::render_tool_line;

pub const REQUIREMENTS_PROMPT: &str = "\
You are an AI agent who acts as a Unity developer for AR applications. Your role is to analyze users' functional needs based on the manuals and then develop the corresponding functions in an AR training system. Note that is not for visually impaired users, but for trainees who are visually healthy and able to wear HoloLen2 AR glasses.
Here are samples of manuals:";

pub const TASK_BRIEF: &str = "\
The task is to generate multiple turns of conversations and called tools between the trainer (assistant) and trainee (user) grounded on the task-specific guidelines and tools in LEGO XR application.";

pub const TASK_FULL: &str = "\
The trainer aims to teach the trainee how to accomplish the assembly task based on the task-specific guidelines, supported by an XR application. Specifically, the trainee is wearing AR glasses to see both VR environment and real world. The trainee knows nothing about the guidelines before trainer's guidance. For each step, the trainee must ask at least one deep-dive question, or request a troublesome issue if he or she cannot follow the guide, or call tools from XR application and learn how to use those tools; the trainer must answer the question, assist the trainee, show them the responses to the execution of the tools. At the end of a conversation, first, the trainer must ask if the trainee has accomplished the task and the trainee must tell if the trainee can accomplish the task; second, the trainer must ask how is user experiences, and the trainee provide feedback on the user experience. You must add a section title to separate which key point in the guideline in the generated conversation and generate until the final step of the guidelines.";

pub const TOOL_INTENT: &str =
    "Imagine some trainee's utterances have the intent of using the tools with the following responses:";

const TRANSCRIPT_FORMAT: &str = "\
Write the conversation in this format:
## <section title>
Trainer: <utterance>
Trainee: <utterance>
A turn that calls a tool is followed by the call and, optionally, its result:
```tool
{\"name\": \"<ToolName>\", \"args\": {}}
```
```response
{\"ok\": true, \"message\": \"<result>\"}
```";

/// System prompt for conversation generation.
pub fn render_generation_system_prompt() -> String {
    let mut out = format!("{TASK_BRIEF}\n{TASK_FULL}\n\nTools:\n");
    for tool in ToolName::ALL {
        out.push_str(&render_tool_line(tool));
        out.push('\n');
    }
    out.push('\n');
    out.push_str(TRANSCRIPT_FORMAT);
    out.push('\n');
    out
}

pub fn render_tool_response_line(call: &ToolCall, response: &ToolResponse) -> String {
    let call = serde_json::to_string(call).expect("tool call serializes");
    format!("- {call} -> {}", response.to_json())
}

/// Query prompt for one chunk and its simulated tool responses.
pub fn render_generation_query(
    chunk: &ManualChunk,
    responses: &[(ToolCall, ToolResponse)],
) -> String {
    let mut out = format!("{TASK_BRIEF}\n\n{}\n{TOOL_INTENT}\n", chunk.render());
    for (call, response) in responses {
        out.push_str(&render_tool_response_line(call, response));
        out.push('\n');
    }
    out
}

pub fn render_requirements_prompt(sample: &[InstructionManual]) -> String {
    let mut out = format!("{REQUIREMENTS_PROMPT}\n");
    for manual in sample {
        out.push_str(&format!(
            "\nTitle: {}\nSummary: {}\n",
            manual.title, manual.summary
        ));
        for step in &manual.steps {
            out.push_str(&format!("Step {}: {}\n", step.index, step.text()));
        }
    }
    out
}
