//! Session state, the behavior tree of prompt-driven nodes, and the
//! single-prompt baseline.

mod action;
mod capability;
mod engine;
pub mod observation;
mod session;
pub mod tree;

pub use action::{ActionError, Agent, AgentStatus, HighLevelAction, UnknownAgent};
pub use capability::{AgentCapability, CapabilityLoadError, CapabilityTable, CapabilityViolation};
pub use engine::{
    node_actions, Attempt, NodeRecord, OnePromptPlanner, Planner, PlannerError, PlannerKind, TickError, TickResult,
    TreePlanner, ONE_PROMPT_NODE,
};
pub use observation::{AgentView, ChatEntry, Observation, ObservationError, Speaker, PLANNER_SPEAKER};
pub use session::{ApplyError, ApplyReport, PlannerState, RecipeSwitch, Rejection};
pub use tree::{InvalidOutput, NodeKind, NodeSpec, TreeConfig, TreeError, ValueKind};
