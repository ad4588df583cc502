//! Agents, statuses and the planner's action vocabulary.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Agent {
    R1,
    R2,
    User,
}

impl Agent {
    pub const ROBOTS: [Agent; 2] = [Agent::R2, Agent::R1];
    pub const ALL: [Agent; 3] = [Agent::R2, Agent::R1, Agent::User];

    pub fn as_str(self) -> &'static str {
        match self {
            Agent::R1 => "R1",
            Agent::R2 => "R2",
            Agent::User => "User",
        }
    }

    pub fn is_robot(self) -> bool {
        self != Agent::User
    }
}

impl fmt::Display for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown agent `{0}`")]
pub struct UnknownAgent(pub String);

impl FromStr for Agent {
    type Err = UnknownAgent;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "r1" => Ok(Agent::R1),
            "r2" => Ok(Agent::R2),
            "user" | "human" | "you" => Ok(Agent::User),
            _ => Err(UnknownAgent(s.to_string())),
        }
    }
}

/// Robot lifecycle status. Prompts call the interrupted state "Killed".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AgentStatus {
    #[default]
    Idle,
    Running,
    #[serde(alias = "Killed")]
    Interrupted,
}

impl AgentStatus {
    /// The word used inside rendered observations.
    pub fn prompt_word(self) -> &'static str {
        match self {
            AgentStatus::Idle => "Idle",
            AgentStatus::Running => "Running",
            AgentStatus::Interrupted => "Killed",
        }
    }

    pub fn parse_word(s: &str) -> Option<AgentStatus> {
        match s.trim().to_ascii_lowercase().as_str() {
            "idle" => Some(AgentStatus::Idle),
            "running" => Some(AgentStatus::Running),
            "killed" | "interrupted" => Some(AgentStatus::Interrupted),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum HighLevelAction {
    Say { msg: String },
    SetRecipe { name: String },
    Assign { agent: Agent, subtasks: Vec<String> },
    MarkComplete { subtasks: Vec<String> },
    Interrupt { agent: Agent },
    NoOp,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ActionError {
    #[error("say with an empty message")]
    EmptySay,
    #[error("interrupt targets `{0}`, which is not a robot")]
    InterruptNonRobot(Agent),
    #[error("{0} with no subtasks")]
    EmptySubtasks(&'static str),
}

impl HighLevelAction {
    pub fn say(msg: impl Into<String>) -> Self {
        HighLevelAction::Say { msg: msg.into() }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            HighLevelAction::Say { .. } => "say",
            HighLevelAction::SetRecipe { .. } => "set_recipe",
            HighLevelAction::Assign { .. } => "assign",
            HighLevelAction::MarkComplete { .. } => "mark_complete",
            HighLevelAction::Interrupt { .. } => "interrupt",
            HighLevelAction::NoOp => "no_op",
        }
    }

    pub fn check(&self) -> Result<(), ActionError> {
        match self {
            HighLevelAction::Say { msg } if msg.trim().is_empty() => Err(ActionError::EmptySay),
            HighLevelAction::Interrupt { agent } if !agent.is_robot() => Err(ActionError::InterruptNonRobot(*agent)),
            HighLevelAction::Assign { subtasks, .. } if subtasks.is_empty() => Err(ActionError::EmptySubtasks("assign")),
            HighLevelAction::MarkComplete { subtasks } if subtasks.is_empty() => {
                Err(ActionError::EmptySubtasks("mark_complete"))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for HighLevelAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HighLevelAction::Say { msg } => write!(f, "say({msg:?})"),
            HighLevelAction::SetRecipe { name } => write!(f, "set_recipe({name:?})"),
            HighLevelAction::Assign { agent, subtasks } => write!(f, "assign({agent}, {subtasks:?})"),
            HighLevelAction::MarkComplete { subtasks } => write!(f, "mark_complete({subtasks:?})"),
            HighLevelAction::Interrupt { agent } => write!(f, "interrupt({agent})"),
            HighLevelAction::NoOp => f.write_str("no_op"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn killed_is_an_alias() {
        let s: AgentStatus = serde_json::from_str("\"Killed\"").unwrap();
        assert_eq!(s, AgentStatus::Interrupted);
        assert_eq!(s.prompt_word(), "Killed");
        assert_eq!(serde_json::to_string(&s).unwrap(), "\"Interrupted\"");
    }

    #[test]
    fn action_json_shape() {
        let a = HighLevelAction::Assign {
            agent: Agent::R2,
            subtasks: vec!["get salt".into()],
        };
        let j = serde_json::to_string(&a).unwrap();
        assert_eq!(j, r#"{"action":"assign","agent":"R2","subtasks":["get salt"]}"#);
        assert_eq!(serde_json::from_str::<HighLevelAction>(&j).unwrap(), a);
        assert_eq!(serde_json::to_string(&HighLevelAction::NoOp).unwrap(), r#"{"action":"no_op"}"#);
    }

    #[test]
    fn action_checks() {
        assert_eq!(HighLevelAction::say(" ").check(), Err(ActionError::EmptySay));
        assert!(HighLevelAction::Interrupt { agent: Agent::User }.check().is_err());
        assert!(HighLevelAction::Interrupt { agent: Agent::R1 }.check().is_ok());
    }

    #[test]
    fn agent_parsing() {
        assert_eq!("r2".parse::<Agent>().unwrap(), Agent::R2);
        assert_eq!("Human".parse::<Agent>().unwrap(), Agent::User);
        assert!("R3".parse::<Agent>().is_err());
    }
}
