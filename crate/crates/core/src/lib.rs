//! Core of the MR assembly-training assistant: instruction manuals, the
//! tool simulator, the vision sub-agent, the trainer agent loop, the
//! synthetic dialogue pipeline and the evaluation metrics.

pub mod agent;
pub mod backend;
pub mod clock;
pub mod config;
pub mod forge;
pub mod jsonl;
pub mod manual;
pub mod metrics;
pub mod sim;
pub mod vision;
