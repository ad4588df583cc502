//! Backend selection from a kind plus optional asset paths.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{CompliantBackend, LiveBackend, LlmBackend, LlmError, ReplayBackend, ScriptedBackend};
use crate::planner::CapabilityTable;
use crate::recipe::RecipeBook;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// Rule file when one is given, otherwise the compliant stand-in.
    #[default]
    Scripted,
    Replay,
    Live,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "scripted" => Ok(BackendKind::Scripted),
            "replay" => Ok(BackendKind::Replay),
            "live" => Ok(BackendKind::Live),
            other => Err(format!("unknown backend `{other}` (expected scripted, replay or live)")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendSpec {
    pub kind: BackendKind,
    /// Rule file for `scripted`, recorded log for `replay`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl BackendSpec {
    pub fn build(&self, book: Arc<RecipeBook>) -> Result<Arc<dyn LlmBackend>, LlmError> {
        Ok(match (self.kind, &self.path) {
            (BackendKind::Scripted, None) => Arc::new(CompliantBackend::new(book, CapabilityTable::default())),
            (BackendKind::Scripted, Some(p)) => Arc::new(ScriptedBackend::load(p)?),
            (BackendKind::Replay, Some(p)) => Arc::new(ReplayBackend::load(p)?),
            (BackendKind::Replay, None) => return Err(LlmError::Config("replay backend needs a recorded log".into())),
            (BackendKind::Live, _) => Arc::new(LiveBackend::from_env()?),
        })
    }
}
