//! Session configuration and asset resolution.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sous_core::llm::{BackendKind, BackendSpec, LlmBackend};
use sous_core::planner::PlannerKind;
use sous_core::recipe::RecipeBook;
use sous_core::runtime::{FaultConfig, WorldConfig};
use thiserror::Error;

fn default_planner() -> PlannerKind {
    PlannerKind::Tree
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    /// Directory of recipe files; the built-in book when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipes: Option<PathBuf>,
    #[serde(default = "default_planner")]
    pub planner: PlannerKind,
    #[serde(default)]
    pub backend: BackendKind,
    /// Rule file for the scripted backend, log for the replay backend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub faults: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Runtime step period for sessions that advance on their own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_ms: Option<u64>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            recipes: None,
            planner: PlannerKind::Tree,
            backend: BackendKind::Scripted,
            backend_path: None,
            world: None,
            faults: None,
            seed: 0,
            step_ms: None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("asset not found: {0}")]
    AssetNotFound(PathBuf),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// Everything a session needs, loaded from a config.
pub struct Resolved {
    pub book: Arc<RecipeBook>,
    pub world: WorldConfig,
    pub faults: FaultConfig,
    pub backend: Arc<dyn LlmBackend>,
}

fn exists(p: &Path) -> Result<(), ConfigError> {
    if p.exists() {
        Ok(())
    } else {
        Err(ConfigError::AssetNotFound(p.to_path_buf()))
    }
}

impl SessionConfig {
    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::InvalidConfig(e.to_string());
        let book = match &self.recipes {
            Some(dir) => {
                exists(dir)?;
                RecipeBook::load_dir(dir).map_err(|e| invalid(&e))?
            }
            None => RecipeBook::builtin(),
        };
        let world = match &self.world {
            Some(p) => {
                exists(p)?;
                WorldConfig::load(p).map_err(|e| invalid(&e))?
            }
            None => WorldConfig::default(),
        };
        let faults = match &self.faults {
            Some(p) => {
                exists(p)?;
                FaultConfig::load(p).map_err(|e| invalid(&e))?
            }
            None => FaultConfig::none(),
        };
        if let Some(p) = &self.backend_path {
            exists(p)?;
        }
        if self.step_ms == Some(0) {
            return Err(ConfigError::InvalidConfig("step_ms must be positive".into()));
        }
        let book = Arc::new(book);
        let spec = BackendSpec {
            kind: self.backend,
            path: self.backend_path.clone(),
        };
        let backend = spec.build(book.clone()).map_err(|e| invalid(&e))?;
        Ok(Resolved {
            book,
            world,
            faults,
            backend,
        })
    }
}
