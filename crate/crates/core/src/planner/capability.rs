//! Which agent may take which subtask, judged by the subtask's leading verb.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::action::Agent;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{agent} cannot do `{subtask}`")]
pub struct CapabilityViolation {
    pub agent: Agent,
    pub subtask: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentCapability {
    /// Leading verb phrases the agent accepts, e.g. "put away".
    #[serde(default)]
    pub verbs: Vec<String>,
    /// Accepts any subtask.
    #[serde(default)]
    pub any: bool,
    /// One line per verb for the `<robot_capabilities>` prompt placeholder.
    #[serde(default)]
    pub describe: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapabilityTable {
    pub agents: BTreeMap<Agent, AgentCapability>,
}

#[derive(Debug, Error)]
pub enum CapabilityLoadError {
    #[error("reading {0}: {1}")]
    Io(String, std::io::Error),
    #[error("parsing capability table: {0}")]
    Toml(#[from] toml::de::Error),
}

pub const DEFAULT_CAPABILITIES: &str = include_str!("../../assets/capabilities.toml");

impl Default for CapabilityTable {
    fn default() -> Self {
        Self::from_toml(DEFAULT_CAPABILITIES).expect("builtin capability table parses")
    }
}

fn normalize(label: &str) -> String {
    label
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

impl CapabilityTable {
    pub fn from_toml(text: &str) -> Result<Self, CapabilityLoadError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, CapabilityLoadError> {
        let text = std::fs::read_to_string(path).map_err(|e| CapabilityLoadError::Io(path.display().to_string(), e))?;
        Self::from_toml(&text)
    }

    /// Verb phrase of `agent` that `label` starts with, if any.
    pub fn matching_verb(&self, agent: Agent, label: &str) -> Option<&str> {
        let cap = self.agents.get(&agent)?;
        let norm = normalize(label);
        cap.verbs
            .iter()
            .filter(|v| {
                let v = v.to_lowercase();
                norm == v || norm.starts_with(&format!("{v} "))
            })
            .max_by_key(|v| v.len())
            .map(String::as_str)
    }

    pub fn can(&self, agent: Agent, label: &str) -> bool {
        match self.agents.get(&agent) {
            Some(cap) if cap.any => !label.trim().is_empty(),
            Some(_) => self.matching_verb(agent, label).is_some(),
            None => false,
        }
    }

    pub fn validate_assignment(&self, agent: Agent, label: &str) -> Result<(), CapabilityViolation> {
        if self.can(agent, label) {
            Ok(())
        } else {
            Err(CapabilityViolation {
                agent,
                subtask: label.to_string(),
            })
        }
    }

    /// First robot (R2 before R1) able to take `label`.
    pub fn capable_robot(&self, label: &str) -> Option<Agent> {
        Agent::ROBOTS.into_iter().find(|a| self.can(*a, label))
    }

    /// Text substituted for `<robot_capabilities>` in prompts.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        for robot in Agent::ROBOTS {
            let Some(cap) = self.agents.get(&robot) else { continue };
            out.push_str(&format!("- {robot}'s capable subtasks are limited to\n"));
            for (i, line) in cap.describe.iter().enumerate() {
                out.push_str(&format!("    ({}) {line}\n", i + 1));
            }
        }
        out.push_str("- Actions not present in their respective lists are beyond their capabilities.");
        out
    }
}
