//! Serves recorded responses back in order, keyed by request hash.

use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;

use super::{CompletionRequest, LlmBackend, LlmError, RecordEntry};

#[derive(Debug)]
pub struct ReplayBackend {
    queues: Mutex<HashMap<String, VecDeque<RecordEntry>>>,
}

impl ReplayBackend {
    pub fn new(entries: impl IntoIterator<Item = RecordEntry>) -> Self {
        let mut queues: HashMap<String, VecDeque<RecordEntry>> = HashMap::new();
        for e in entries {
            queues.entry(e.request_hash.clone()).or_default().push_back(e);
        }
        ReplayBackend {
            queues: Mutex::new(queues),
        }
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let entries = RecordEntry::read_jsonl(path).map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        Ok(Self::new(entries))
    }

    pub fn remaining(&self) -> usize {
        self.queues.lock().expect("replay state poisoned").values().map(VecDeque::len).sum()
    }
}

impl LlmBackend for ReplayBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        let hash = request.request_hash();
        let mut queues = self.queues.lock().expect("replay state poisoned");
        let entry = queues
            .get_mut(&hash)
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| LlmError::ReplayExhausted {
                node: request.node_name.clone(),
                hash: hash.clone(),
            })?;
        match entry.error {
            // Recorded failures replay as transport errors so retries line up.
            Some(msg) => Err(LlmError::TransportError(msg)),
            None => Ok(entry.response_text),
        }
    }
}
