//! Symbolic kitchen: where objects are, where R2 stands, what each gripper
//! holds. Skills are checked against and applied to this state.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planner::Agent;
use crate::skills::{object_constants, SkillCall};

pub const BUILTIN_WORLD: &str = include_str!("../../assets/world.toml");

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("world file: {0}")]
    Io(#[from] std::io::Error),
    #[error("world file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("object {object} starts at unknown location {location}")]
    UnknownLocation { object: String, location: String },
    #[error("{0} is both an object and a location")]
    Ambiguous(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct R2Config {
    pub start: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct R1Config {
    pub reach: Vec<String>,
    pub gripper_at: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub locations: Vec<String>,
    #[serde(default)]
    pub ingredients: Vec<String>,
    pub feedback_interval: u64,
    pub r2: R2Config,
    pub r1: R1Config,
    pub objects: BTreeMap<String, String>,
    pub durations: BTreeMap<String, u64>,
}

impl WorldConfig {
    pub fn from_toml(text: &str) -> Result<Self, WorldError> {
        let cfg: WorldConfig = toml::from_str(text)?;
        let locs: BTreeSet<&String> = cfg.locations.iter().collect();
        for (obj, loc) in &cfg.objects {
            if !locs.contains(loc) {
                return Err(WorldError::UnknownLocation {
                    object: obj.clone(),
                    location: loc.clone(),
                });
            }
            if locs.contains(obj) {
                return Err(WorldError::Ambiguous(obj.clone()));
            }
        }
        for loc in cfg.r1.reach.iter().chain([&cfg.r2.start, &cfg.r1.gripper_at]) {
            if !locs.contains(loc) {
                return Err(WorldError::UnknownLocation {
                    object: "robot".into(),
                    location: loc.clone(),
                });
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, WorldError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Simulated ticks for one call of `skill`; unknown skills take one tick.
    pub fn duration(&self, skill: &str) -> u64 {
        self.durations.get(skill).copied().unwrap_or(1).max(1)
    }

    /// Every constant a generated program may mention.
    pub fn constants(&self) -> BTreeSet<String> {
        self.locations
            .iter()
            .chain(self.ingredients.iter())
            .chain(self.objects.keys())
            .cloned()
            .collect()
    }
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self::from_toml(BUILTIN_WORLD).expect("builtin world parses")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "at", rename_all = "snake_case")]
pub enum Place {
    Location(String),
    Gripper(Agent),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum SkillFailure {
    #[error("{object} is not here")]
    ObjectNotHere { object: String },
    #[error("gripper is empty")]
    GripperEmpty,
    #[error("gripper already holds {object}")]
    GripperFull { object: String },
    #[error("{location} is out of reach")]
    Unreachable { location: String },
    #[error("{skill} is not a skill of this agent")]
    UnsupportedSkill { skill: String },
}

/// Object conservation breach found by [`KitchenWorld::check_conservation`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConservationError {
    #[error("object count changed from {expected} to {found}")]
    Count { expected: usize, found: usize },
    #[error("{agent} holds {count} objects")]
    Overfull { agent: Agent, count: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KitchenWorld {
    pub locations: BTreeSet<String>,
    pub placements: BTreeMap<String, Place>,
    pub r2_location: String,
    pub r1_reach: BTreeSet<String>,
    pub r1_gripper_at: String,
    object_count: usize,
}

impl KitchenWorld {
    pub fn new(cfg: &WorldConfig) -> Self {
        KitchenWorld {
            locations: cfg.locations.iter().cloned().collect(),
            placements: cfg
                .objects
                .iter()
                .map(|(o, l)| (o.clone(), Place::Location(l.clone())))
                .collect(),
            r2_location: cfg.r2.start.clone(),
            r1_reach: cfg.r1.reach.iter().cloned().collect(),
            r1_gripper_at: cfg.r1.gripper_at.clone(),
            object_count: cfg.objects.len(),
        }
    }

    pub fn held_by(&self, agent: Agent) -> Option<&str> {
        self.placements
            .iter()
            .find(|(_, p)| **p == Place::Gripper(agent))
            .map(|(o, _)| o.as_str())
    }

    pub fn location_of(&self, object: &str) -> Option<&Place> {
        self.placements.get(object)
    }

    /// Where `agent`'s gripper currently is.
    pub fn gripper_location(&self, agent: Agent) -> &str {
        match agent {
            Agent::R2 => &self.r2_location,
            _ => &self.r1_gripper_at,
        }
    }

    fn can_reach(&self, agent: Agent, location: &str) -> bool {
        match agent {
            Agent::R2 => self.r2_location == location,
            _ => self.r1_reach.contains(location),
        }
    }

    /// Drops whatever `agent` holds where its gripper is.
    pub fn release(&mut self, agent: Agent) -> Option<String> {
        let obj = self.held_by(agent)?.to_string();
        let at = self.gripper_location(agent).to_string();
        self.placements.insert(obj.clone(), Place::Location(at));
        Some(obj)
    }

    fn needs_empty(&self, agent: Agent) -> Result<(), SkillFailure> {
        match self.held_by(agent) {
            Some(o) => Err(SkillFailure::GripperFull { object: o.to_string() }),
            None => Ok(()),
        }
    }

    fn needs_holding(&self, agent: Agent) -> Result<String, SkillFailure> {
        self.held_by(agent).map(str::to_string).ok_or(SkillFailure::GripperEmpty)
    }

    fn needs_reach(&self, agent: Agent, location: &str) -> Result<(), SkillFailure> {
        if self.can_reach(agent, location) {
            Ok(())
        } else {
            Err(SkillFailure::Unreachable {
                location: location.to_string(),
            })
        }
    }

    fn object_at(&self, object: &str, ok: impl Fn(&str) -> bool) -> Result<(), SkillFailure> {
        match self.placements.get(object) {
            Some(Place::Location(l)) if ok(l) => Ok(()),
            _ => Err(SkillFailure::ObjectNotHere {
                object: object.to_string(),
            }),
        }
    }

    /// Checks preconditions of `call` and applies its effect. On failure the
    /// world is unchanged.
    pub fn apply(&mut self, agent: Agent, call: &SkillCall) -> Result<(), SkillFailure> {
        let arg = |i: usize| call.arg(i).to_string();
        match call.skill.as_str() {
            "go_to" if agent == Agent::R2 => {
                let to = arg(0);
                if !self.locations.contains(&to) {
                    return Err(SkillFailure::Unreachable { location: to });
                }
                self.r2_location = to;
            }
            "move_gripper_to" if agent != Agent::R2 => {
                let to = arg(0);
                self.needs_reach(agent, &to)?;
                self.r1_gripper_at = to;
            }
            "pick_up_item" => {
                let obj = arg(0);
                self.needs_empty(agent)?;
                self.object_at(&obj, |l| self.can_reach(agent, l))?;
                if agent != Agent::R2 {
                    if let Some(Place::Location(l)) = self.placements.get(&obj) {
                        self.r1_gripper_at = l.clone();
                    }
                }
                self.placements.insert(obj, Place::Gripper(agent));
            }
            "place_item_at" => {
                let to = arg(0);
                self.needs_reach(agent, &to)?;
                let obj = self.needs_holding(agent)?;
                if agent != Agent::R2 {
                    self.r1_gripper_at = to.clone();
                }
                self.placements.insert(obj, Place::Location(to));
            }
            "get_obj_from_user" => {
                let obj = arg(0);
                self.needs_empty(agent)?;
                self.object_at(&obj, |l| l == "USER" || l == "TABLE")?;
                self.placements.insert(obj, Place::Gripper(agent));
            }
            "stir" => {
                // Needs a utensil standing in a reachable pot or bowl.
                let ready = self.placements.iter().any(|(o, p)| {
                    o == "LADLE" && matches!(p, Place::Location(l) if (l == "POT" || l == "BOWL") && self.can_reach(agent, l))
                });
                if !ready {
                    return Err(SkillFailure::ObjectNotHere { object: "LADLE".into() });
                }
            }
            "pour" => {
                let (what, into) = (arg(0), arg(1));
                self.needs_reach(agent, &into)?;
                if self.placements.contains_key(&what) {
                    self.object_at(&what, |l| self.can_reach(agent, l) || l == "TABLE")?;
                }
            }
            "spread" => {
                // The spread is set back on the table afterwards.
                let obj = arg(0);
                let held = self.needs_holding(agent)?;
                if held != obj {
                    return Err(SkillFailure::ObjectNotHere { object: obj });
                }
                self.placements.insert(obj, Place::Location("TABLE".into()));
            }
            other => {
                return Err(SkillFailure::UnsupportedSkill { skill: other.to_string() });
            }
        }
        Ok(())
    }

    /// World effect of the user finishing `label` themselves.
    pub fn user_completed(&mut self, label: &str) {
        let lower = label.to_lowercase();
        let dest = if lower.starts_with("put away") { "SHELF" } else { "TABLE" };
        if !(lower.starts_with("get ") || lower.starts_with("fetch ") || lower.starts_with("put away")) {
            return;
        }
        for obj in object_constants(label) {
            if let Some(p @ Place::Location(_)) = self.placements.get_mut(&obj) {
                *p = Place::Location(dest.into());
            }
        }
    }

    pub fn check_conservation(&self) -> Result<(), ConservationError> {
        if self.placements.len() != self.object_count {
            return Err(ConservationError::Count {
                expected: self.object_count,
                found: self.placements.len(),
            });
        }
        for agent in Agent::ROBOTS {
            let count = self.placements.values().filter(|p| **p == Place::Gripper(agent)).count();
            if count > 1 {
                return Err(ConservationError::Overfull { agent, count });
            }
        }
        Ok(())
    }
}

impl Default for KitchenWorld {
    fn default() -> Self {
        Self::new(&WorldConfig::default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skills::synthesize_program;

    fn call(s: &str, args: &[&str]) -> SkillCall {
        SkillCall::new(s, args)
    }

    #[test]
    fn pick_needs_object_at_agent() {
        let mut w = KitchenWorld::default();
        assert_eq!(
            w.apply(Agent::R2, &call("pick_up_item", &["SALT"])),
            Err(SkillFailure::ObjectNotHere { object: "SALT".into() })
        );
        w.apply(Agent::R2, &call("go_to", &["PANTRY"])).unwrap();
        w.apply(Agent::R2, &call("pick_up_item", &["SALT"])).unwrap();
        assert_eq!(w.held_by(Agent::R2), Some("SALT"));
        assert_eq!(
            w.apply(Agent::R2, &call("pick_up_item", &["PEPPER"])),
            Err(SkillFailure::GripperFull { object: "SALT".into() })
        );
        w.check_conservation().unwrap();
    }

    #[test]
    fn every_robot_recipe_subtask_runs_in_order() {
        let book = crate::recipe::RecipeBook::builtin();
        let caps = crate::planner::CapabilityTable::default();
        for dag in book.iter() {
            let mut w = KitchenWorld::default();
            for id in dag.topological_order() {
                let label = id;
                match caps.capable_robot(label) {
                    Some(agent) => {
                        let prog = synthesize_program(label, &[]).unwrap();
                        for c in &prog.calls {
                            w.apply(agent, c).unwrap_or_else(|e| panic!("{label}: {c}: {e}"));
                        }
                    }
                    None => w.user_completed(label),
                }
                w.check_conservation().unwrap();
            }
        }
    }

    #[test]
    fn user_hooks_and_release() {
        let mut w = KitchenWorld::default();
        w.user_completed("get salt");
        assert_eq!(w.location_of("SALT"), Some(&Place::Location("TABLE".into())));
        w.apply(Agent::R2, &call("get_obj_from_user", &["SALT"])).unwrap();
        assert_eq!(w.release(Agent::R2), Some("SALT".into()));
        assert_eq!(w.location_of("SALT"), Some(&Place::Location("TABLE".into())));
        w.user_completed("put away salt");
        assert_eq!(w.location_of("SALT"), Some(&Place::Location("SHELF".into())));
    }

    #[test]
    fn rejects_bad_config() {
        let bad = BUILTIN_WORLD.replace("SPOON = \"TABLE\"", "SPOON = \"GARAGE\"");
        assert!(matches!(WorldConfig::from_toml(&bad), Err(WorldError::UnknownLocation { .. })));
    }
}
