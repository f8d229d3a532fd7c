//! JSON description of which chat and vision backends to use.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agent::{LlmBackend, ScriptedBackend, DEFAULT_MAX_ITERATIONS};
use crate::backend::{BackendError, HttpChatClient, HttpConfig};
use crate::vision::{HttpVisionBackend, MockRule, MockVisionBackend, VisionBackend};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LlmSpec {
    /// Replays `outputs`, or the JSON array in `script_file`.
    Scripted {
        #[serde(default)]
        outputs: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        script_file: Option<PathBuf>,
    },
    Http(HttpConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VlmSpec {
    Mock {
        #[serde(default)]
        rules: Vec<MockRule>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rules_file: Option<PathBuf>,
    },
    Http(HttpConfig),
}

fn default_max_iterations() -> usize {
    DEFAULT_MAX_ITERATIONS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub llm: LlmSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vlm: Option<VlmSpec>,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
}

fn resolve(base: &Path, path: &mut Option<PathBuf>) {
    if let Some(p) = path {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
}

impl BackendConfig {
    pub fn scripted<I, S>(outputs: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            llm: LlmSpec::Scripted {
                outputs: outputs.into_iter().map(Into::into).collect(),
                script_file: None,
            },
            vlm: None,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }

    /// Reads a config file; relative script and rule paths are taken
    /// relative to the file's directory.
    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let text = fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        let mut config: Self = serde_json::from_str(&text)
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let LlmSpec::Scripted { script_file, .. } = &mut config.llm {
            resolve(base, script_file);
        }
        if let Some(VlmSpec::Mock { rules_file, .. }) = &mut config.vlm {
            resolve(base, rules_file);
        }
        Ok(config)
    }

    /// True when no backend talks to the network.
    pub fn is_local(&self) -> bool {
        !matches!(self.llm, LlmSpec::Http(_)) && !matches!(self.vlm, Some(VlmSpec::Http(_)))
    }

    /// References files on disk.
    pub fn reads_files(&self) -> bool {
        matches!(
            self.llm,
            LlmSpec::Scripted {
                script_file: Some(_),
                ..
            }
        ) || matches!(
            self.vlm,
            Some(VlmSpec::Mock {
                rules_file: Some(_),
                ..
            })
        )
    }

    /// A fresh chat backend; scripted backends start from the first output.
    pub fn build_llm(&self) -> Result<Arc<dyn LlmBackend>, BackendError> {
        Ok(match &self.llm {
            LlmSpec::Scripted {
                outputs,
                script_file: None,
            } => Arc::new(ScriptedBackend::new(outputs.iter().cloned())),
            LlmSpec::Scripted {
                outputs,
                script_file: Some(path),
            } => {
                if !outputs.is_empty() {
                    return Err(BackendError::Config(
                        "give either `outputs` or `script_file`, not both".into(),
                    ));
                }
                Arc::new(ScriptedBackend::from_file(path)?)
            }
            LlmSpec::Http(http) => Arc::new(HttpChatClient::new(http)?),
        })
    }

    pub fn build_vlm(&self) -> Result<Option<Arc<dyn VisionBackend>>, BackendError> {
        Ok(match &self.vlm {
            None => None,
            Some(VlmSpec::Mock {
                rules,
                rules_file: None,
            }) => Some(Arc::new(MockVisionBackend::new(rules.clone()))),
            Some(VlmSpec::Mock {
                rules,
                rules_file: Some(path),
            }) => {
                let mut backend_rules = MockVisionBackend::from_file(path)?.rules().to_vec();
                backend_rules.extend(rules.iter().cloned());
                Some(Arc::new(MockVisionBackend::new(backend_rules)))
            }
            Some(VlmSpec::Http(http)) => Some(Arc::new(HttpVisionBackend::new(http)?)),
        })
    }
}
