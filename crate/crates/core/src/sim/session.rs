use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::tools::{Direction, ToolCall, ToolName};
use crate::manual::{InstructionManual, StepInstruction};
use crate::vision::{self, VisionBackend, VisionError};

pub const ZOOM_FACTOR: f64 = 1.25;
pub const ZOOM_MIN: f64 = 0.25;
pub const ZOOM_MAX: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolErrorCode {
    NotStarted,
    AlreadyStarted,
    AtFinalStep,
    AtFirstStep,
    StepOutOfRange,
    StepsIncomplete,
    VlmUnavailable,
    VlmFailed,
    NoFrame,
    BadArgs,
}

impl fmt::Display for ToolErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("serializes");
        f.write_str(s.as_str().unwrap_or("error"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResponse {
    pub ok: bool,
    pub message: String,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub data: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_code: Option<ToolErrorCode>,
}

impl ToolResponse {
    pub fn success(message: impl Into<String>, data: Value) -> Self {
        Self {
            ok: true,
            message: message.into(),
            data,
            error_code: None,
        }
    }

    pub fn failure(code: ToolErrorCode, message: impl Into<String>) -> Self {
        Self {
            ok: false,
            message: message.into(),
            data: Value::Null,
            error_code: Some(code),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("response serializes")
    }
}

/// The mutable view state of one assembly session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssemblyState {
    pub current_step: u32,
    pub total_steps: u32,
    pub started: bool,
    pub finished: bool,
    pub exploded: bool,
    pub zoom: f64,
    pub rotation: Direction,
    pub highlights: BTreeSet<String>,
    /// `step_completed[i]` is the status of step `i + 1`.
    pub step_completed: Vec<bool>,
    /// Camera frame handed to the vision agent; falls back to the current
    /// step's image when unset.
    pub frame_ref: Option<String>,
}

impl AssemblyState {
    pub fn new(total_steps: u32) -> Self {
        Self {
            current_step: 0,
            total_steps,
            started: false,
            finished: false,
            exploded: false,
            zoom: 1.0,
            rotation: Direction::None,
            highlights: BTreeSet::new(),
            step_completed: vec![false; total_steps as usize],
            frame_ref: None,
        }
    }

    /// Checks every session invariant, returning the first violated one.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.current_step > self.total_steps {
            return Err(format!(
                "current_step {} > total {}",
                self.current_step, self.total_steps
            ));
        }
        if !self.started && self.current_step != 0 {
            return Err("not started but current_step != 0".into());
        }
        if self.started && self.current_step == 0 {
            return Err("started but current_step == 0".into());
        }
        if self.finished && !self.step_completed.iter().all(|d| *d) {
            return Err("finished with incomplete steps".into());
        }
        if !(ZOOM_MIN..=ZOOM_MAX).contains(&self.zoom) {
            return Err(format!("zoom {} out of range", self.zoom));
        }
        if self.step_completed.len() != self.total_steps as usize {
            return Err("step_completed length mismatch".into());
        }
        Ok(())
    }

    pub fn remaining_steps(&self) -> u32 {
        self.total_steps - self.current_step
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEntry {
    Tool {
        call: ToolCall,
        response: ToolResponse,
    },
    StepMark {
        step: u32,
        done: bool,
    },
    Frame {
        frame_ref: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("step {step} out of range 1..={total}")]
pub struct StepOutOfRange {
    pub step: i64,
    pub total: u32,
}

/// A simulated MR assembly session driven by the serving tools.
#[derive(Debug, Clone)]
pub struct AssemblySession {
    pub session_id: String,
    manual: Arc<InstructionManual>,
    state: AssemblyState,
    trace: Vec<TraceEntry>,
}

fn arg_step(call: &ToolCall) -> Result<i64, ToolResponse> {
    match (call.args.len(), call.args.get("step")) {
        (1, Some(v)) => v
            .as_i64()
            .ok_or_else(|| bad_args(call, "`step` must be an integer")),
        _ => Err(bad_args(call, "expected exactly one argument `step`")),
    }
}

fn arg_direction(call: &ToolCall) -> Result<Direction, ToolResponse> {
    let raw = match (call.args.len(), call.args.get("direction")) {
        (1, Some(Value::String(s))) => s,
        _ => {
            return Err(bad_args(
                call,
                "expected exactly one string argument `direction`",
            ))
        }
    };
    Direction::parse(raw).ok_or_else(|| {
        bad_args(
            call,
            &format!("direction must be one of {:?}", Direction::NAMES),
        )
    })
}

fn bad_args(call: &ToolCall, why: &str) -> ToolResponse {
    ToolResponse::failure(ToolErrorCode::BadArgs, format!("{}: {why}", call.name))
}

impl AssemblySession {
    pub fn new(session_id: impl Into<String>, manual: Arc<InstructionManual>) -> Self {
        let total = manual.steps.len() as u32;
        Self {
            session_id: session_id.into(),
            manual,
            state: AssemblyState::new(total),
            trace: Vec::new(),
        }
    }

    pub fn manual(&self) -> &InstructionManual {
        &self.manual
    }

    pub fn manual_arc(&self) -> Arc<InstructionManual> {
        Arc::clone(&self.manual)
    }

    pub fn state(&self) -> &AssemblyState {
        &self.state
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    pub fn tool_calls(&self) -> impl Iterator<Item = &ToolCall> {
        self.trace.iter().filter_map(|e| match e {
            TraceEntry::Tool { call, .. } => Some(call),
            _ => None,
        })
    }

    fn current(&self) -> Option<&StepInstruction> {
        self.manual.step(self.state.current_step)
    }

    fn frame(&self) -> Option<String> {
        self.state
            .frame_ref
            .clone()
            .or_else(|| self.current().and_then(|s| s.image_ref.clone()))
    }

    /// Applies one tool call. Failures come back as `ok: false` responses and
    /// leave the state untouched; every call is appended to the trace.
    pub fn dispatch(&mut self, call: &ToolCall, vlm: Option<&dyn VisionBackend>) -> ToolResponse {
        let response = match self.apply(call, vlm) {
            Ok((next, response)) => {
                self.state = next;
                response
            }
            Err(response) => response,
        };
        self.trace.push(TraceEntry::Tool {
            call: call.clone(),
            response: response.clone(),
        });
        response
    }

    fn require_started(&self) -> Result<(), ToolResponse> {
        if self.state.started {
            Ok(())
        } else {
            Err(ToolResponse::failure(
                ToolErrorCode::NotStarted,
                "The assembly has not started yet. Call StartAssemble first.",
            ))
        }
    }

    fn no_args(call: &ToolCall) -> Result<(), ToolResponse> {
        if call.args.is_empty() {
            Ok(())
        } else {
            Err(bad_args(call, "takes no arguments"))
        }
    }

    fn step_data(step: &StepInstruction) -> Value {
        json!({
            "step": step.index,
            "instructions": step.instructions,
            "image_ref": step.image_ref,
            "piece_ids": step.piece_ids,
        })
    }

    /// Computes the next state without touching `self`.
    fn apply(
        &self,
        call: &ToolCall,
        vlm: Option<&dyn VisionBackend>,
    ) -> Result<(AssemblyState, ToolResponse), ToolResponse> {
        use ToolName::*;
        let mut s = self.state.clone();
        let total = s.total_steps;
        if !matches!(call.name, GoToStep | Rotate) {
            Self::no_args(call)?;
        }
        let response = match call.name {
            StartAssemble => {
                if s.started {
                    return Err(ToolResponse::failure(
                        ToolErrorCode::AlreadyStarted,
                        "The assembly has already started.",
                    ));
                }
                s.started = true;
                s.current_step = 1;
                s.highlights.clear();
                ToolResponse::success(
                    format!("Assembly started. You are on step 1 of {total}."),
                    json!({"step": 1, "total_steps": total}),
                )
            }
            NextStep => {
                self.require_started()?;
                if s.current_step >= total {
                    return Err(ToolResponse::failure(
                        ToolErrorCode::AtFinalStep,
                        format!("Already at the final step ({total})."),
                    ));
                }
                s.current_step += 1;
                s.highlights.clear();
                ToolResponse::success(
                    format!("Moved to step {} of {total}.", s.current_step),
                    json!({"step": s.current_step, "total_steps": total}),
                )
            }
            FrontStep => {
                self.require_started()?;
                if s.current_step <= 1 {
                    return Err(ToolResponse::failure(
                        ToolErrorCode::AtFirstStep,
                        "Already at the first step.",
                    ));
                }
                s.current_step -= 1;
                s.highlights.clear();
                ToolResponse::success(
                    format!("Went back to step {} of {total}.", s.current_step),
                    json!({"step": s.current_step, "total_steps": total}),
                )
            }
            GoToStep => {
                let n = arg_step(call)?;
                self.require_started()?;
                if n < 1 || n > total as i64 {
                    return Err(ToolResponse::failure(
                        ToolErrorCode::StepOutOfRange,
                        format!("Step {n} does not exist; valid steps are 1 to {total}."),
                    ));
                }
                s.current_step = n as u32;
                s.highlights.clear();
                ToolResponse::success(
                    format!("Jumped to step {n} of {total}."),
                    json!({"step": n, "total_steps": total}),
                )
            }
            Explode => {
                if s.exploded {
                    ToolResponse::success(
                        "The object is already exploded.",
                        json!({"exploded": true, "changed": false}),
                    )
                } else {
                    s.exploded = true;
                    ToolResponse::success(
                        "Exploded view enabled for detailed viewing.",
                        json!({"exploded": true, "changed": true}),
                    )
                }
            }
            Recover => {
                s.exploded = false;
                s.zoom = 1.0;
                s.rotation = Direction::None;
                ToolResponse::success(
                    "AR objects restored to their initial state.",
                    json!({"exploded": false, "zoom": 1.0, "rotation": "None"}),
                )
            }
            FinishedVideo => {
                self.require_started()?;
                let missing: Vec<usize> = s
                    .step_completed
                    .iter()
                    .enumerate()
                    .filter(|(_, done)| !**done)
                    .map(|(i, _)| i + 1)
                    .collect();
                if !missing.is_empty() {
                    return Err(ToolResponse::failure(
                        ToolErrorCode::StepsIncomplete,
                        format!("Steps {missing:?} are not completed yet."),
                    ));
                }
                s.finished = true;
                let video = format!("video://{}/assembled.mp4", self.manual.id);
                ToolResponse::success(
                    "Assembly finished. Playing the video of the assembled model.",
                    json!({"video_ref": video}),
                )
            }
            ReShow => {
                self.require_started()?;
                let step = self.current().expect("started session has a current step");
                ToolResponse::success(
                    format!("Step {}: {}", step.index, step.text()),
                    Self::step_data(step),
                )
            }
            Enlarge | Shrink => {
                let target = if call.name == Enlarge {
                    s.zoom * ZOOM_FACTOR
                } else {
                    s.zoom / ZOOM_FACTOR
                };
                s.zoom = target.clamp(ZOOM_MIN, ZOOM_MAX);
                let clamped = s.zoom != target;
                ToolResponse::success(
                    if clamped {
                        format!("Zoom limit reached ({:.2}x).", s.zoom)
                    } else {
                        format!("Zoom set to {:.2}x.", s.zoom)
                    },
                    json!({"zoom": s.zoom, "clamped": clamped}),
                )
            }
            Rotate => {
                let d = arg_direction(call)?;
                if d != Direction::None {
                    s.rotation = d;
                }
                ToolResponse::success(
                    match d {
                        Direction::None => "No rotation applied.".to_string(),
                        d => format!("Rotated the object {}.", d.as_str().to_lowercase()),
                    },
                    json!({"rotation": s.rotation}),
                )
            }
            ShowPieces => {
                self.require_started()?;
                let step = self.current().expect("current step");
                ToolResponse::success(
                    format!(
                        "Candidate pieces for step {}: {}",
                        step.index,
                        step.piece_ids.join(", ")
                    ),
                    json!({"step": step.index, "piece_ids": step.piece_ids}),
                )
            }
            HighlightCorrectComponents => {
                self.require_started()?;
                let step = self.current().expect("current step");
                s.highlights = step.piece_ids.iter().cloned().collect();
                ToolResponse::success(
                    format!(
                        "Highlighted components for step {}: {}",
                        step.index,
                        step.piece_ids.join(", ")
                    ),
                    json!({"step": step.index, "highlights": step.piece_ids}),
                )
            }
            GetCurrentStep => ToolResponse::success(
                if s.started {
                    format!("You are on step {} of {total}.", s.current_step)
                } else {
                    "The assembly has not started yet.".to_string()
                },
                json!({"step": s.current_step, "total_steps": total}),
            ),
            GetRemainingStep => {
                let remaining = s.remaining_steps();
                ToolResponse::success(
                    format!("{remaining} steps remaining."),
                    json!({"remaining": remaining, "total_steps": total}),
                )
            }
            CheckStepStatusVR => {
                self.require_started()?;
                let done = s.step_completed[s.current_step as usize - 1];
                ToolResponse::success(
                    if done {
                        format!("Step {} is accomplished correctly.", s.current_step)
                    } else {
                        format!("Step {} is not accomplished yet.", s.current_step)
                    },
                    json!({"step": s.current_step, "completed": done}),
                )
            }
            APICallObjectRecognitionAR | APICallCheckStepStatusAR => {
                self.require_started()?;
                let vlm = vlm.ok_or_else(|| {
                    ToolResponse::failure(
                        ToolErrorCode::VlmUnavailable,
                        "The vision-language agent is not available.",
                    )
                })?;
                let frame = self.frame().ok_or_else(|| {
                    ToolResponse::failure(ToolErrorCode::NoFrame, "No camera frame is available.")
                })?;
                let step = self.current().expect("current step");
                let vlm_failed = |e: VisionError| {
                    ToolResponse::failure(
                        ToolErrorCode::VlmFailed,
                        format!("Vision agent failed: {e}"),
                    )
                };
                if call.name == APICallObjectRecognitionAR {
                    let d = vision::detect_object(step, &frame, vlm).map_err(vlm_failed)?;
                    s.highlights = BTreeSet::from([d.object_label.clone()]);
                    ToolResponse::success(
                        format!("Recognized and highlighted: {}.", d.canonical()),
                        json!({"frame_ref": frame, "detection": d}),
                    )
                } else {
                    let v = vision::check_assembly_state(&frame, step, vlm).map_err(vlm_failed)?;
                    ToolResponse::success(
                        format!(
                            "Step {} {} the reference state. {}",
                            step.index,
                            if v.matches {
                                "matches"
                            } else {
                                "does not match"
                            },
                            v.rationale
                        )
                        .trim_end()
                        .to_string(),
                        json!({"frame_ref": frame, "verdict": v}),
                    )
                }
            }
        };
        Ok((s, response))
    }

    /// Records ground truth for a step (the checker the app would run).
    /// Clearing a step also clears `finished`.
    pub fn set_step_completed(&mut self, step: i64, done: bool) -> Result<(), StepOutOfRange> {
        let total = self.state.total_steps;
        if step < 1 || step > total as i64 {
            return Err(StepOutOfRange { step, total });
        }
        self.state.step_completed[step as usize - 1] = done;
        if !done {
            self.state.finished = false;
        }
        self.trace.push(TraceEntry::StepMark {
            step: step as u32,
            done,
        });
        Ok(())
    }

    pub fn set_frame(&mut self, frame_ref: Option<String>) {
        self.state.frame_ref = frame_ref.clone();
        self.trace.push(TraceEntry::Frame { frame_ref });
    }

    /// Re-applies a recorded trace to a fresh session over the same manual.
    /// Vision tool outcomes come from the recorded responses, so no backend
    /// is consulted.
    pub fn replay(
        session_id: impl Into<String>,
        manual: Arc<InstructionManual>,
        trace: &[TraceEntry],
    ) -> Self {
        let mut session = Self::new(session_id, manual);
        for entry in trace {
            match entry {
                TraceEntry::Tool { call, response } if call.name.is_vision() => {
                    session.apply_recorded(call, response);
                }
                TraceEntry::Tool { call, .. } => {
                    session.dispatch(call, None);
                }
                TraceEntry::StepMark { step, done } => {
                    let _ = session.set_step_completed(*step as i64, *done);
                }
                TraceEntry::Frame { frame_ref } => session.set_frame(frame_ref.clone()),
            }
        }
        session
    }

    fn apply_recorded(&mut self, call: &ToolCall, response: &ToolResponse) {
        if response.ok && call.name == ToolName::APICallObjectRecognitionAR {
            if let Some(label) = response.data["detection"]["object_label"].as_str() {
                self.state.highlights = BTreeSet::from([label.to_string()]);
            }
        }
        self.trace.push(TraceEntry::Tool {
            call: call.clone(),
            response: response.clone(),
        });
    }

    /// Restores a session from a persisted state snapshot and trace.
    pub fn restore(
        session_id: impl Into<String>,
        manual: Arc<InstructionManual>,
        state: AssemblyState,
        trace: Vec<TraceEntry>,
    ) -> Self {
        Self {
            session_id: session_id.into(),
            manual,
            state,
            trace,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToolUsage {
    pub count: usize,
    pub fraction: f64,
}

/// Call counts and shares per tool name.
pub fn tool_histogram<'a>(
    calls: impl IntoIterator<Item = &'a ToolCall>,
) -> BTreeMap<String, ToolUsage> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for call in calls {
        *counts.entry(call.name.as_str().to_string()).or_default() += 1;
    }
    let total: usize = counts.values().sum();
    counts
        .into_iter()
        .map(|(name, count)| {
            (
                name,
                ToolUsage {
                    count,
                    fraction: count as f64 / total as f64,
                },
            )
        })
        .collect()
}

/// Histogram over every tool call recorded in the sessions' traces.
pub fn trace_histogram(sessions: &[AssemblySession]) -> BTreeMap<String, ToolUsage> {
    tool_histogram(sessions.iter().flat_map(|s| s.tool_calls()))
}
