//! Deterministic simulator of the MR assembly application. Its transitions
//! are exactly the serving tools in [`ToolName`].

mod session;
mod tools;

pub use session::{
    tool_histogram, trace_histogram, AssemblySession, AssemblyState, StepOutOfRange, ToolErrorCode,
    ToolResponse, ToolUsage, TraceEntry, ZOOM_FACTOR, ZOOM_MAX, ZOOM_MIN,
};
pub use tools::{
    list_tools, registry_json, tool_specs, Direction, ToolCall, ToolName, ToolSpec, UnknownTool,
};

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

/// One line of a trace file; `timestamp` is the entry's logical position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub timestamp: u64,
    #[serde(flatten)]
    pub entry: TraceEntry,
}

pub fn write_trace_jsonl<W: Write>(trace: &[TraceEntry], mut out: W) -> io::Result<()> {
    for (i, entry) in trace.iter().enumerate() {
        let record = TraceRecord {
            timestamp: i as u64,
            entry: entry.clone(),
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace_jsonl<R: BufRead>(input: R) -> io::Result<Vec<TraceEntry>> {
    let mut trace = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TraceRecord = serde_json::from_str(&line)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        trace.push(record.entry);
    }
    Ok(trace)
}
