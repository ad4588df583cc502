//! Completion interface shared by every planner node, with recording,
//! replay, scripted and live backends.

pub mod compliant;
mod json;
mod live;
mod replay;
mod scripted;
mod select;
mod sloppy;

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::prompts::PromptExample;

pub use compliant::CompliantBackend;
pub use json::{extract_json, JsonError};
pub use live::{LiveBackend, LiveConfig};
pub use replay::ReplayBackend;
pub use scripted::{Predicate, ScriptedBackend, ScriptedRule};
pub use select::{BackendKind, BackendSpec};
pub use sloppy::{Corruption, SloppyBackend};

/// Node name used for skill code generation requests.
pub const CODEGEN_NODE: &str = "Code_Generation";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decoding {
    pub max_tokens: u32,
    pub deterministic: bool,
}

impl Default for Decoding {
    fn default() -> Self {
        Decoding {
            max_tokens: 1024,
            deterministic: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub node_name: String,
    pub system: String,
    pub instructions: String,
    #[serde(default)]
    pub examples: Vec<PromptExample>,
    pub rendered_observation: String,
    #[serde(default)]
    pub decoding: Decoding,
}

impl CompletionRequest {
    /// Replay key: digest of the node name and the rendered observation.
    /// Decoding settings and prompt text are deliberately left out.
    pub fn request_hash(&self) -> String {
        request_hash(&self.node_name, &self.rendered_observation)
    }

    /// Chat messages for chat-completion style endpoints.
    pub fn messages(&self) -> Vec<ChatMessage> {
        let mut system = self.system.clone();
        if !self.instructions.is_empty() {
            if !system.is_empty() {
                system.push_str("\n\n");
            }
            system.push_str(&self.instructions);
        }
        let mut out = vec![ChatMessage {
            role: "system".into(),
            content: system,
        }];
        for ex in &self.examples {
            out.push(ChatMessage {
                role: "user".into(),
                content: ex.observation.clone(),
            });
            out.push(ChatMessage {
                role: "assistant".into(),
                content: ex.response.clone(),
            });
        }
        out.push(ChatMessage {
            role: "user".into(),
            content: self.rendered_observation.clone(),
        });
        out
    }
}

pub fn request_hash(node_name: &str, rendered_observation: &str) -> String {
    let mut h = Sha256::new();
    h.update(node_name.as_bytes());
    h.update([0u8]);
    h.update(rendered_observation.as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LlmError {
    #[error("no scripted rule matches node `{node}`")]
    NoMatchingRule { node: String },
    #[error("replay log has no more responses for node `{node}` ({hash})")]
    ReplayExhausted { node: String, hash: String },
    #[error("transport error: {0}")]
    TransportError(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

pub trait LlmBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError>;
}

impl<T: LlmBackend + ?Sized> LlmBackend for Arc<T> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        (**self).complete(request)
    }
}

impl<T: LlmBackend + ?Sized> LlmBackend for Box<T> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        (**self).complete(request)
    }
}

/// One line of the recording log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub request_hash: String,
    pub node_name: String,
    pub response_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RecordEntry {
    pub fn read_jsonl(path: &Path) -> std::io::Result<Vec<RecordEntry>> {
        let file = File::open(path)?;
        let mut out = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry = serde_json::from_str(&line).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
            out.push(entry);
        }
        Ok(out)
    }
}

#[derive(Default)]
struct RecordSink {
    entries: Vec<RecordEntry>,
    file: Option<File>,
}

/// Wraps a backend and records every call, successful or not.
pub struct Gateway {
    backend: Arc<dyn LlmBackend>,
    sink: Mutex<RecordSink>,
}

impl Gateway {
    pub fn new(backend: Arc<dyn LlmBackend>) -> Self {
        Gateway {
            backend,
            sink: Mutex::new(RecordSink::default()),
        }
    }

    /// Also appends each entry to a JSON-lines file.
    pub fn with_log_file(backend: Arc<dyn LlmBackend>, path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Gateway {
            backend,
            sink: Mutex::new(RecordSink {
                entries: Vec::new(),
                file: Some(file),
            }),
        })
    }

    pub fn records(&self) -> Vec<RecordEntry> {
        self.sink.lock().expect("record sink poisoned").entries.clone()
    }

    pub fn record_count(&self) -> usize {
        self.sink.lock().expect("record sink poisoned").entries.len()
    }
}

impl LlmBackend for Gateway {
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        let result = self.backend.complete(request);
        let entry = RecordEntry {
            request_hash: request.request_hash(),
            node_name: request.node_name.clone(),
            response_text: result.as_ref().cloned().unwrap_or_default(),
            error: result.as_ref().err().map(ToString::to_string),
        };
        let mut sink = self.sink.lock().expect("record sink poisoned");
        if let Some(f) = sink.file.as_mut() {
            let line = serde_json::to_string(&entry).expect("record serializes");
            if let Err(e) = writeln!(f, "{line}") {
                tracing::error!(error = %e, "failed to append to recording log");
            }
        }
        sink.entries.push(entry);
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Echo;
    impl LlmBackend for Echo {
        fn complete(&self, r: &CompletionRequest) -> Result<String, LlmError> {
            if r.node_name == "fail" {
                Err(LlmError::TransportError("down".into()))
            } else {
                Ok(r.rendered_observation.clone())
            }
        }
    }

    fn req(node: &str, obs: &str) -> CompletionRequest {
        CompletionRequest {
            node_name: node.into(),
            system: "s".into(),
            instructions: "i".into(),
            examples: vec![],
            rendered_observation: obs.into(),
            decoding: Decoding::default(),
        }
    }

    #[test]
    fn hash_ignores_decoding_and_prompt_text() {
        let a = req("Recipe", "x");
        let mut b = a.clone();
        b.decoding.max_tokens = 7;
        b.system = "other".into();
        assert_eq!(a.request_hash(), b.request_hash());
        assert_ne!(a.request_hash(), req("Recipe", "y").request_hash());
        assert_ne!(a.request_hash(), req("Decision", "x").request_hash());
    }

    #[test]
    fn gateway_records_every_call() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.jsonl");
        let g = Gateway::with_log_file(Arc::new(Echo), &path).unwrap();
        assert_eq!(g.complete(&req("Recipe", "a")).unwrap(), "a");
        assert!(g.complete(&req("fail", "b")).is_err());
        assert_eq!(g.record_count(), 2);
        let back = RecordEntry::read_jsonl(&path).unwrap();
        assert_eq!(back, g.records());
        assert!(back[1].error.is_some());
    }

    #[test]
    fn messages_interleave_examples() {
        let mut r = req("Recipe", "obs");
        r.examples.push(PromptExample {
            description: String::new(),
            observation: "o1".into(),
            response: "r1".into(),
        });
        let m = r.messages();
        assert_eq!(m.len(), 4);
        assert_eq!(m[0].content, "s\n\ni");
        assert_eq!(m[2].role, "assistant");
        assert_eq!(m[3].content, "obs");
    }
}
