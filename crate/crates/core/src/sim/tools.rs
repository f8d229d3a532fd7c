use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

/// The serving tools exposed by the MR application, in registry order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ToolName {
    StartAssemble,
    NextStep,
    FrontStep,
    Explode,
    Recover,
    FinishedVideo,
    ReShow,
    Enlarge,
    Shrink,
    GoToStep,
    Rotate,
    ShowPieces,
    HighlightCorrectComponents,
    GetCurrentStep,
    GetRemainingStep,
    CheckStepStatusVR,
    APICallObjectRecognitionAR,
    APICallCheckStepStatusAR,
}

impl ToolName {
    pub const ALL: [ToolName; 18] = [
        ToolName::StartAssemble,
        ToolName::NextStep,
        ToolName::FrontStep,
        ToolName::Explode,
        ToolName::Recover,
        ToolName::FinishedVideo,
        ToolName::ReShow,
        ToolName::Enlarge,
        ToolName::Shrink,
        ToolName::GoToStep,
        ToolName::Rotate,
        ToolName::ShowPieces,
        ToolName::HighlightCorrectComponents,
        ToolName::GetCurrentStep,
        ToolName::GetRemainingStep,
        ToolName::CheckStepStatusVR,
        ToolName::APICallObjectRecognitionAR,
        ToolName::APICallCheckStepStatusAR,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ToolName::StartAssemble => "StartAssemble",
            ToolName::NextStep => "NextStep",
            ToolName::FrontStep => "FrontStep",
            ToolName::Explode => "Explode",
            ToolName::Recover => "Recover",
            ToolName::FinishedVideo => "FinishedVideo",
            ToolName::ReShow => "ReShow",
            ToolName::Enlarge => "Enlarge",
            ToolName::Shrink => "Shrink",
            ToolName::GoToStep => "GoToStep",
            ToolName::Rotate => "Rotate",
            ToolName::ShowPieces => "ShowPieces",
            ToolName::HighlightCorrectComponents => "HighlightCorrectComponents",
            ToolName::GetCurrentStep => "GetCurrentStep",
            ToolName::GetRemainingStep => "GetRemainingStep",
            ToolName::CheckStepStatusVR => "CheckStepStatusVR",
            ToolName::APICallObjectRecognitionAR => "APICallObjectRecognitionAR",
            ToolName::APICallCheckStepStatusAR => "APICallCheckStepStatusAR",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            ToolName::StartAssemble => "Initiate the assembly process.",
            ToolName::NextStep => "Move to the next assembly step.",
            ToolName::FrontStep => "Go back to the previous assembly step.",
            ToolName::Explode => "Trigger an explosion for detailed viewing.",
            ToolName::Recover => "Restore the initial state of AR objects after explosion.",
            ToolName::FinishedVideo => {
                "End the assembly process and show a video of the assembled LEGO bricks."
            }
            ToolName::ReShow => "Repeat the current assembly step.",
            ToolName::Enlarge => "Enlarge or zoom out the current object.",
            ToolName::Shrink => "Shrink or zoom in the current object.",
            ToolName::GoToStep => "Go to the given assembly step number.",
            ToolName::Rotate => {
                "Rotate the current object to a direction (\"Up\", \"Down\", \"Left\", \"Right\", \"None\")."
            }
            ToolName::ShowPieces => "Show all candidate LEGO pieces to be assembled.",
            ToolName::HighlightCorrectComponents => {
                "Highlight correct attachment points and components."
            }
            ToolName::GetCurrentStep => "Get the number of the current step.",
            ToolName::GetRemainingStep => "Get the number of the remaining steps.",
            ToolName::CheckStepStatusVR => {
                "Check whether the current step in Unity is accomplished correctly or not."
            }
            ToolName::APICallObjectRecognitionAR => {
                "Call the VLM agent to identify LEGO pieces based on the provided video streaming data from AR glasses and highlight the recognized pieces in the AR environment."
            }
            ToolName::APICallCheckStepStatusAR => {
                "Call the VLM agent to determine whether the current assembly step is completed correctly or not, using the provided video streaming data from AR glasses as input."
            }
        }
    }

    /// Tools served by the vision-language agent rather than the app itself.
    pub fn is_vision(self) -> bool {
        matches!(
            self,
            ToolName::APICallObjectRecognitionAR | ToolName::APICallCheckStepStatusAR
        )
    }

    /// Argument name and JSON type, if the tool takes one.
    pub fn argument(self) -> Option<(&'static str, &'static str)> {
        match self {
            ToolName::GoToStep => Some(("step", "integer")),
            ToolName::Rotate => Some(("direction", "string")),
            _ => None,
        }
    }

    /// JSON-schema style description of the tool's arguments.
    pub fn args_schema(self) -> Value {
        match self {
            ToolName::GoToStep => json!({
                "type": "object",
                "properties": {"step": {"type": "integer", "minimum": 1}},
                "required": ["step"],
            }),
            ToolName::Rotate => json!({
                "type": "object",
                "properties": {"direction": {"type": "string", "enum": Direction::NAMES}},
                "required": ["direction"],
            }),
            _ => json!({"type": "object", "properties": {}}),
        }
    }
}

impl fmt::Display for ToolName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownTool(pub String);

impl fmt::Display for UnknownTool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown tool `{}`", self.0)
    }
}

impl std::error::Error for UnknownTool {}

impl FromStr for ToolName {
    type Err = UnknownTool;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ToolName::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| UnknownTool(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
    #[default]
    None,
}

impl Direction {
    pub const ALL: [Direction; 5] = [
        Direction::Up,
        Direction::Down,
        Direction::Left,
        Direction::Right,
        Direction::None,
    ];
    pub const NAMES: [&'static str; 5] = ["Up", "Down", "Left", "Right", "None"];

    pub fn as_str(self) -> &'static str {
        Self::NAMES[Self::ALL.iter().position(|d| *d == self).unwrap()]
    }

    /// Case-insensitive lookup.
    pub fn parse(s: &str) -> Option<Direction> {
        Self::ALL
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(s.trim()))
    }
}

/// A tool invocation. Arguments are kept as raw JSON so that a
/// well-named call with bad arguments still reaches the simulator, which
/// answers it with `BadArgs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: ToolName,
    #[serde(default)]
    pub args: Map<String, Value>,
}

impl ToolCall {
    pub fn new(name: ToolName) -> Self {
        Self {
            name,
            args: Map::new(),
        }
    }

    pub fn go_to_step(step: i64) -> Self {
        let mut call = Self::new(ToolName::GoToStep);
        call.args.insert("step".into(), json!(step));
        call
    }

    pub fn rotate(direction: Direction) -> Self {
        let mut call = Self::new(ToolName::Rotate);
        call.args
            .insert("direction".into(), json!(direction.as_str()));
        call
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ToolSpec {
    pub name: &'static str,
    pub description: &'static str,
    pub args: Value,
}

/// Registry as (name, description) pairs, in table order.
pub fn list_tools() -> Vec<(&'static str, &'static str)> {
    ToolName::ALL
        .iter()
        .map(|t| (t.as_str(), t.description()))
        .collect()
}

/// Registry with argument schemas, for prompts and clients.
pub fn tool_specs() -> Vec<ToolSpec> {
    ToolName::ALL
        .iter()
        .map(|t| ToolSpec {
            name: t.as_str(),
            description: t.description(),
            args: t.args_schema(),
        })
        .collect()
}

/// The registry serialized as a JSON array.
pub fn registry_json() -> String {
    serde_json::to_string_pretty(&tool_specs()).expect("registry serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_shape() {
        let tools = list_tools();
        assert_eq!(tools.len(), 18);
        assert_eq!(
            tools[0],
            ("StartAssemble", "Initiate the assembly process.")
        );
        let rotate = tools.iter().find(|t| t.0 == "Rotate").unwrap();
        assert!(rotate
            .1
            .starts_with("Rotate the current object to a direction"));
        for name in ToolName::ALL {
            assert_eq!(name.as_str().parse::<ToolName>().unwrap(), name);
        }
        assert!("FlyToMoon".parse::<ToolName>().is_err());
    }

    #[test]
    fn serde_uses_tool_names() {
        let call = ToolCall::go_to_step(3);
        let text = serde_json::to_string(&call).unwrap();
        assert_eq!(text, r#"{"name":"GoToStep","args":{"step":3}}"#);
        let back: ToolCall = serde_json::from_str(r#"{"name":"NextStep"}"#).unwrap();
        assert_eq!(back, ToolCall::new(ToolName::NextStep));
    }

    #[test]
    fn direction_parse() {
        assert_eq!(Direction::parse("left"), Some(Direction::Left));
        assert_eq!(Direction::parse("None"), Some(Direction::None));
        assert_eq!(Direction::parse("sideways"), None);
    }
}
