//! Fault injection keyed to the failure taxonomy, with module attribution.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Failure categories:
/// A pick failure, B place failure, C drop while moving, D interrupt
/// mis-transcribed, E wrong subtask handed to the executor, F tracking loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FaultCategory {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl FaultCategory {
    pub const ALL: [FaultCategory; 6] = [
        FaultCategory::A,
        FaultCategory::B,
        FaultCategory::C,
        FaultCategory::D,
        FaultCategory::E,
        FaultCategory::F,
    ];

    pub fn module(self) -> Module {
        match self {
            FaultCategory::A | FaultCategory::B | FaultCategory::C => Module::VisuomotorSkill,
            FaultCategory::D | FaultCategory::E => Module::TaskPlanner,
            FaultCategory::F => Module::MotionForecasting,
        }
    }

    /// Whether a call of `skill` with first argument `arg` can trigger this
    /// category. `holding` tells whether the gripper is loaded.
    pub fn applies_to(self, skill: &str, arg: &str, holding: bool) -> bool {
        match self {
            FaultCategory::A => skill == "pick_up_item",
            FaultCategory::B => skill == "place_item_at",
            FaultCategory::C => holding && (skill == "go_to" || skill == "move_gripper_to"),
            FaultCategory::F => skill == "stir" || (skill == "move_gripper_to" && arg == "USER"),
            FaultCategory::D | FaultCategory::E => false,
        }
    }
}

/// Module a failure is attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Module {
    TaskPlanner,
    VisuomotorSkill,
    MotionForecasting,
}

/// Fires the first time `category` gets a chance on or after `tick` of run
/// `run`, then is spent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedFault {
    pub category: FaultCategory,
    pub run: u64,
    pub tick: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FaultConfig {
    #[serde(default)]
    pub probability: BTreeMap<FaultCategory, f64>,
    #[serde(default)]
    pub scripted: Vec<ScriptedFault>,
}

#[derive(Debug, Error)]
pub enum FaultConfigError {
    #[error("fault file: {0}")]
    Io(#[from] std::io::Error),
    #[error("fault file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("probability for {category:?} is {value}, outside [0, 1]")]
    OutOfRange { category: FaultCategory, value: f64 },
}

impl FaultConfig {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn with(mut self, category: FaultCategory, p: f64) -> Self {
        self.probability.insert(category, p);
        self
    }

    pub fn from_toml(text: &str) -> Result<Self, FaultConfigError> {
        let cfg: FaultConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, FaultConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), FaultConfigError> {
        for (&category, &value) in &self.probability {
            if !(0.0..=1.0).contains(&value) {
                return Err(FaultConfigError::OutOfRange { category, value });
            }
        }
        Ok(())
    }

    pub fn p(&self, category: FaultCategory) -> f64 {
        self.probability.get(&category).copied().unwrap_or(0.0)
    }
}

/// Draws fault decisions from a dedicated stream so that fault settings do
/// not perturb any other randomness.
#[derive(Debug, Clone)]
pub struct FaultInjector {
    config: FaultConfig,
    run: u64,
    rng: ChaCha8Rng,
    spent: Vec<bool>,
}

const FAULT_STREAM: u64 = 0xfa17;

impl FaultInjector {
    pub fn new(config: FaultConfig, seed: u64, run: u64) -> Self {
        let spent = vec![false; config.scripted.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(FAULT_STREAM);
        FaultInjector { config, run, rng, spent }
    }

    pub fn config(&self) -> &FaultConfig {
        &self.config
    }

    /// Decides whether `category` fires at this opportunity.
    pub fn roll(&mut self, category: FaultCategory, tick: u64) -> bool {
        for (i, s) in self.config.scripted.iter().enumerate() {
            if !self.spent[i] && s.category == category && s.run == self.run && tick >= s.tick {
                self.spent[i] = true;
                return true;
            }
        }
        let p = self.config.p(category);
        p > 0.0 && self.rng.random_bool(p)
    }
}
