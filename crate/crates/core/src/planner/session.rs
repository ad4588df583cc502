//! Planner-side session state and how high-level actions change it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::action::{ActionError, Agent, AgentStatus, HighLevelAction};
use super::capability::{CapabilityTable, CapabilityViolation};
use super::observation::{AgentView, ChatEntry, Observation};
use crate::recipe::{RecipeBook, RecipeDag};

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ApplyError {
    #[error("unknown recipe `{0}`")]
    UnknownRecipe(String),
    #[error("unknown subtask `{0}`")]
    UnknownSubtaskLabel(String),
    #[error("`{0}` cannot be interrupted")]
    UnknownAgent(Agent),
    #[error("{agent} cannot do `{subtask}`")]
    Capability { agent: Agent, subtask: String },
    #[error("`{subtask}` is already {state}")]
    AlreadyTaken { subtask: String, state: String },
    #[error("no recipe is set")]
    NoRecipe,
    #[error("{0}")]
    Invalid(String),
}

impl From<CapabilityViolation> for ApplyError {
    fn from(v: CapabilityViolation) -> Self {
        ApplyError::Capability {
            agent: v.agent,
            subtask: v.subtask,
        }
    }
}

impl From<ActionError> for ApplyError {
    fn from(e: ActionError) -> Self {
        ApplyError::Invalid(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub action: HighLevelAction,
    pub error: ApplyError,
}

/// Mid-recipe switch: queues were cleared and the new recipe loaded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecipeSwitch {
    pub from: String,
    pub to: String,
    pub cleared: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApplyReport {
    pub rejected: Vec<Rejection>,
    /// Robots whose running subtask must be cancelled.
    pub interrupts: Vec<Agent>,
    pub recipe_switch: Option<RecipeSwitch>,
    /// Labels newly completed by the user rather than a robot.
    pub completed_by_user: Vec<String>,
    /// Newly assigned (agent, label) pairs.
    pub assigned: Vec<(Agent, String)>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannerState {
    pub dag: Option<RecipeDag>,
    pub r1: AgentView,
    pub r2: AgentView,
    pub user_queue: Vec<String>,
    pub completed: Vec<String>,
    pub chat: Vec<ChatEntry>,
    pub user_input: String,
    /// Subtasks assigned that are not part of the recipe.
    pub extras: Vec<String>,
}

impl PlannerState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn robot(&self, agent: Agent) -> Option<&AgentView> {
        match agent {
            Agent::R1 => Some(&self.r1),
            Agent::R2 => Some(&self.r2),
            Agent::User => None,
        }
    }

    pub fn robot_mut(&mut self, agent: Agent) -> Option<&mut AgentView> {
        match agent {
            Agent::R1 => Some(&mut self.r1),
            Agent::R2 => Some(&mut self.r2),
            Agent::User => None,
        }
    }

    pub fn queue(&self, agent: Agent) -> &Vec<String> {
        match agent {
            Agent::R1 => &self.r1.subtask_queue,
            Agent::R2 => &self.r2.subtask_queue,
            Agent::User => &self.user_queue,
        }
    }

    fn queue_mut(&mut self, agent: Agent) -> &mut Vec<String> {
        match agent {
            Agent::R1 => &mut self.r1.subtask_queue,
            Agent::R2 => &mut self.r2.subtask_queue,
            Agent::User => &mut self.user_queue,
        }
    }

    pub fn recipe_name(&self) -> &str {
        self.dag.as_ref().map(RecipeDag::recipe_name).unwrap_or("")
    }

    /// Agent whose queue or current subtask holds `label`.
    pub fn holder(&self, label: &str) -> Option<(Agent, bool)> {
        for a in Agent::ROBOTS {
            let r = self.robot(a).expect("robot");
            if r.current_subtask == label {
                return Some((a, true));
            }
        }
        Agent::ALL
            .into_iter()
            .find(|a| self.queue(*a).iter().any(|l| l == label))
            .map(|a| (a, false))
    }

    /// Frontier labels nobody holds yet.
    pub fn available_subtasks(&self) -> Vec<String> {
        let Some(dag) = &self.dag else { return Vec::new() };
        dag.available_subtasks()
            .into_iter()
            .filter(|l| self.holder(l).is_none() && !self.completed.iter().any(|c| c == l))
            .map(str::to_string)
            .collect()
    }

    pub fn observation(&self) -> Observation {
        Observation {
            recipe_name: self.recipe_name().to_string(),
            available_subtasks: self.available_subtasks(),
            r1: self.r1.clone(),
            r2: self.r2.clone(),
            user_subtask_queue: self.user_queue.clone(),
            completed_subtask_list: self.completed.clone(),
            chat_history: self.chat.clone(),
            user_input: self.user_input.clone(),
        }
    }

    pub fn user_says(&mut self, text: &str) {
        self.chat.push(ChatEntry::user(text));
        self.user_input = text.to_string();
    }

    pub fn clear_user_input(&mut self) {
        self.user_input.clear();
    }

    /// Recipe done and nobody has anything left to do.
    pub fn is_finished(&self) -> bool {
        self.dag.as_ref().is_some_and(RecipeDag::is_finished)
            && self.user_queue.is_empty()
            && Agent::ROBOTS.into_iter().all(|a| {
                let r = self.robot(a).expect("robot");
                r.subtask_queue.is_empty() && r.status != AgentStatus::Running
            })
    }

    /// Records a completion. Returns false when it was already recorded.
    pub fn complete_subtask(&mut self, label: &str) -> bool {
        for a in Agent::ALL {
            self.queue_mut(a).retain(|l| l != label);
        }
        if self.completed.iter().any(|c| c == label) {
            return false;
        }
        self.completed.push(label.to_string());
        if let Some(dag) = self.dag.as_mut() {
            if dag.contains(label) {
                if let Err(e) = dag.set_done(label) {
                    tracing::warn!(label, error = %e, "could not mark subtask done");
                }
            }
        }
        true
    }

    fn is_known(&self, label: &str) -> bool {
        self.dag.as_ref().is_some_and(|d| d.contains(label))
            || self.extras.iter().any(|e| e == label)
            || self.holder(label).is_some()
    }

    fn assign_one(&mut self, agent: Agent, label: &str, caps: &CapabilityTable) -> Result<bool, ApplyError> {
        caps.validate_assignment(agent, label)?;
        if self.completed.iter().any(|c| c == label) {
            return Err(ApplyError::AlreadyTaken {
                subtask: label.to_string(),
                state: "completed".into(),
            });
        }
        match self.holder(label) {
            Some((a, true)) => {
                return Err(ApplyError::AlreadyTaken {
                    subtask: label.to_string(),
                    state: format!("being done by {a}"),
                })
            }
            Some((a, false)) if a == agent => return Ok(false),
            Some((a, false)) => self.queue_mut(a).retain(|l| l != label),
            None => {}
        }
        if !self.dag.as_ref().is_some_and(|d| d.contains(label)) && !self.extras.iter().any(|e| e == label) {
            self.extras.push(label.to_string());
        }
        self.queue_mut(agent).push(label.to_string());
        Ok(true)
    }

    fn set_recipe(&mut self, name: &str, book: &RecipeBook, report: &mut ApplyReport) -> Result<(), ApplyError> {
        let dag = book.get(name).ok_or_else(|| ApplyError::UnknownRecipe(name.to_string()))?;
        if self.dag.as_ref().is_some_and(|d| d.recipe_name() == dag.recipe_name()) {
            return Ok(());
        }
        let mut cleared = Vec::new();
        for a in Agent::ALL {
            cleared.append(self.queue_mut(a));
        }
        if let Some(old) = &self.dag {
            report.recipe_switch = Some(RecipeSwitch {
                from: old.recipe_name().to_string(),
                to: dag.recipe_name().to_string(),
                cleared,
            });
        }
        let mut fresh = dag.clone();
        fresh.reset();
        self.dag = Some(fresh);
        self.completed.clear();
        self.extras.clear();
        Ok(())
    }

    /// Applies actions in order. Invalid actions, or the invalid labels of
    /// an action, are rejected and reported; the rest still apply.
    pub fn apply_actions(&mut self, actions: &[HighLevelAction], book: &RecipeBook, caps: &CapabilityTable) -> ApplyReport {
        let mut report = ApplyReport::default();
        for action in actions {
            if let Err(e) = action.check() {
                report.rejected.push(Rejection {
                    action: action.clone(),
                    error: e.into(),
                });
                continue;
            }
            match action {
                HighLevelAction::Say { msg } => self.chat.push(ChatEntry::planner(msg.trim())),
                HighLevelAction::NoOp => {}
                HighLevelAction::SetRecipe { name } => {
                    let mut local = ApplyReport::default();
                    match self.set_recipe(name, book, &mut local) {
                        Ok(()) => report.recipe_switch = local.recipe_switch.or(report.recipe_switch.take()),
                        Err(e) => report.rejected.push(Rejection {
                            action: action.clone(),
                            error: e,
                        }),
                    }
                }
                HighLevelAction::Assign { agent, subtasks } => {
                    for label in subtasks.iter().map(|s| s.trim()).filter(|s| !s.is_empty()) {
                        if self.dag.is_none() {
                            report.rejected.push(Rejection {
                                action: action.clone(),
                                error: ApplyError::NoRecipe,
                            });
                            break;
                        }
                        match self.assign_one(*agent, label, caps) {
                            Ok(true) => report.assigned.push((*agent, label.to_string())),
                            Ok(false) => {}
                            Err(e) => report.rejected.push(Rejection {
                                action: action.clone(),
                                error: e,
                            }),
                        }
                    }
                }
                HighLevelAction::MarkComplete { subtasks } => {
                    for label in subtasks.iter().map(|s| s.trim()).filter(|s| !s.is_empty()) {
                        if !self.is_known(label) && !self.completed.iter().any(|c| c == label) {
                            report.rejected.push(Rejection {
                                action: action.clone(),
                                error: ApplyError::UnknownSubtaskLabel(label.to_string()),
                            });
                            continue;
                        }
                        let by_robot = matches!(self.holder(label), Some((_, true)));
                        if self.complete_subtask(label) && !by_robot {
                            report.completed_by_user.push(label.to_string());
                        }
                    }
                }
                HighLevelAction::Interrupt { agent } => {
                    let Some(robot) = self.robot_mut(*agent) else {
                        report.rejected.push(Rejection {
                            action: action.clone(),
                            error: ApplyError::UnknownAgent(*agent),
                        });
                        continue;
                    };
                    if robot.status == AgentStatus::Running {
                        robot.status = AgentStatus::Interrupted;
                        robot.current_subtask.clear();
                        report.interrupts.push(*agent);
                    }
                }
            }
        }
        report
    }
}
