//! Session events and the fold that rebuilds session state from them.
//!
//! On the wire every event is `{seq, kind, payload}`. Planner actions use
//! the action name as their kind (`say`, `assign`, ...) so a subscriber can
//! follow a session without knowing the tick structure.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sous_core::eval::{Record, Transcript};
use sous_core::phrases::parse_user_text;
use sous_core::planner::{
    Agent, AgentStatus, CapabilityTable, ChatEntry, HighLevelAction, NodeRecord, Observation, PlannerKind,
    PlannerState,
};
use sous_core::recipe::RecipeBook;
use sous_core::runtime::{KitchenWorld, MessageKind, RestorePoint, RuntimeEvent, SkillOutcome};
use sous_core::skills::SkillCall;

use crate::config::SessionConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// Chat entries kept in a snapshot's `recent_chat`.
pub const RECENT_CHAT: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub kind: String,
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventBody {
    Created {
        session_id: String,
        config: SessionConfig,
    },
    UserTurn {
        text: String,
        heard: String,
    },
    /// One planner action as applied, with any rejection messages.
    Action {
        tick_id: usize,
        action: HighLevelAction,
        rejected: Vec<String>,
    },
    /// Closes a tick whose actions were just published.
    Tick {
        tick_id: usize,
        node_path: Vec<String>,
        raw_llm_io: Vec<NodeRecord>,
        observation_hash: String,
        /// Observation hash the planner considers seen after this tick.
        settled_hash: String,
    },
    TickError {
        tick_id: usize,
        error: String,
        settled_hash: String,
    },
    Runtime(RuntimeEvent),
    /// The runtime clock after an advance request.
    Advanced {
        steps: u64,
        clock: u64,
    },
}

const ACTION_KINDS: [&str; 6] = ["say", "set_recipe", "assign", "mark_complete", "interrupt", "no_op"];

#[derive(Debug, thiserror::Error)]
#[error("event {seq}: {message}")]
pub struct DecodeError {
    pub seq: u64,
    pub message: String,
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::Created { .. } => "created",
            EventBody::UserTurn { .. } => "user_turn",
            EventBody::Action { action, .. } => action.kind(),
            EventBody::Tick { .. } => "tick",
            EventBody::TickError { .. } => "tick_error",
            EventBody::Runtime(_) => "runtime",
            EventBody::Advanced { .. } => "advanced",
        }
    }

    pub fn payload(&self) -> Value {
        match self {
            EventBody::Created { session_id, config } => json!({"session_id": session_id, "config": config}),
            EventBody::UserTurn { text, heard } => json!({"text": text, "heard": heard}),
            EventBody::Action {
                tick_id,
                action,
                rejected,
            } => json!({"tick_id": tick_id, "action": action, "rejected": rejected}),
            EventBody::Tick {
                tick_id,
                node_path,
                raw_llm_io,
                observation_hash,
                settled_hash,
            } => json!({
                "tick_id": tick_id,
                "node_path": node_path,
                "raw_llm_io": raw_llm_io,
                "observation_hash": observation_hash,
                "settled_hash": settled_hash,
            }),
            EventBody::TickError {
                tick_id,
                error,
                settled_hash,
            } => json!({"tick_id": tick_id, "error": error, "settled_hash": settled_hash}),
            EventBody::Runtime(e) => serde_json::to_value(e).expect("runtime event serializes"),
            EventBody::Advanced { steps, clock } => json!({"steps": steps, "clock": clock}),
        }
    }

    pub fn to_event(&self, seq: u64) -> Event {
        Event {
            seq,
            kind: self.kind().to_string(),
            payload: self.payload(),
        }
    }

    pub fn from_event(e: &Event) -> Result<Self, DecodeError> {
        let err = |m: String| DecodeError { seq: e.seq, message: m };
        let field = |name: &str| e.payload.get(name).cloned().unwrap_or(Value::Null);
        fn de<T: serde::de::DeserializeOwned>(v: Value) -> Result<T, String> {
            serde_json::from_value(v).map_err(|x| x.to_string())
        }
        let body = match e.kind.as_str() {
            "created" => EventBody::Created {
                session_id: de(field("session_id")).map_err(err)?,
                config: de(field("config")).map_err(err)?,
            },
            "user_turn" => EventBody::UserTurn {
                text: de(field("text")).map_err(err)?,
                heard: de(field("heard")).map_err(err)?,
            },
            k if ACTION_KINDS.contains(&k) => EventBody::Action {
                tick_id: de(field("tick_id")).map_err(err)?,
                action: de(field("action")).map_err(err)?,
                rejected: de(field("rejected")).map_err(err)?,
            },
            "tick" => EventBody::Tick {
                tick_id: de(field("tick_id")).map_err(err)?,
                node_path: de(field("node_path")).map_err(err)?,
                raw_llm_io: de(field("raw_llm_io")).map_err(err)?,
                observation_hash: de(field("observation_hash")).map_err(err)?,
                settled_hash: de(field("settled_hash")).map_err(err)?,
            },
            "tick_error" => EventBody::TickError {
                tick_id: de(field("tick_id")).map_err(err)?,
                error: de(field("error")).map_err(err)?,
                settled_hash: de(field("settled_hash")).map_err(err)?,
            },
            "runtime" => EventBody::Runtime(de(e.payload.clone()).map_err(err)?),
            "advanced" => EventBody::Advanced {
                steps: de(field("steps")).map_err(err)?,
                clock: de(field("clock")).map_err(err)?,
            },
            other => return Err(err(format!("unknown kind `{other}`"))),
        };
        Ok(body)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub agent: Agent,
    pub status: AgentStatus,
    pub current_subtask: String,
    pub queue: Vec<String>,
}

/// Published view of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub version: u32,
    pub session_id: String,
    /// Sequence number of the last event folded in.
    pub seq: u64,
    pub planner: PlannerKind,
    pub recipe_name: String,
    pub observation: Observation,
    pub recent_chat: Vec<ChatEntry>,
    pub agents: Vec<AgentRecord>,
    pub tick_counter: usize,
    pub clock: u64,
    pub finished: bool,
}

pub fn snapshot_of(
    session_id: &str,
    seq: u64,
    planner: PlannerKind,
    state: &PlannerState,
    ticks: usize,
    clock: u64,
) -> SessionSnapshot {
    let agents = Agent::ALL
        .into_iter()
        .map(|a| {
            let (status, current) = state
                .robot(a)
                .map(|v| (v.status, v.current_subtask.clone()))
                .unwrap_or((AgentStatus::Idle, String::new()));
            AgentRecord {
                agent: a,
                status,
                current_subtask: current,
                queue: state.queue(a).clone(),
            }
        })
        .collect();
    let skip = state.chat.len().saturating_sub(RECENT_CHAT);
    SessionSnapshot {
        version: SCHEMA_VERSION,
        session_id: session_id.to_string(),
        seq,
        planner,
        recipe_name: state.recipe_name().to_string(),
        observation: state.observation(),
        recent_chat: state.chat[skip..].to_vec(),
        agents,
        tick_counter: ticks,
        clock,
        finished: state.is_finished(),
    }
}

/// Left fold of a session's events. Rebuilds the planner state, and the
/// runtime state needed to continue the session after a restart.
pub struct Fold {
    pub session_id: String,
    pub config: Option<SessionConfig>,
    pub state: PlannerState,
    pub world: KitchenWorld,
    pub ticks: usize,
    pub clock: u64,
    pub seq: u64,
    pub last_hash: Option<String>,
    next_correlation: u64,
    next_attempt: u64,
    calls: BTreeMap<u64, SkillCall>,
    /// Subtask each robot is running, with the calls it already finished.
    pub inflight: BTreeMap<Agent, (String, Vec<String>)>,
    book: RecipeBook,
    caps: CapabilityTable,
}

impl Fold {
    pub fn new(book: RecipeBook, world: KitchenWorld) -> Self {
        Fold {
            session_id: String::new(),
            config: None,
            state: PlannerState::new(),
            world,
            ticks: 0,
            clock: 0,
            seq: 0,
            last_hash: None,
            next_correlation: 1,
            next_attempt: 1,
            calls: BTreeMap::new(),
            inflight: BTreeMap::new(),
            book,
            caps: CapabilityTable::default(),
        }
    }

    pub fn apply(&mut self, seq: u64, body: &EventBody) {
        self.seq = seq;
        match body {
            EventBody::Created { session_id, config } => {
                self.session_id = session_id.clone();
                self.config = Some(config.clone());
            }
            EventBody::UserTurn { heard, .. } => self.state.user_says(heard),
            EventBody::Action { action, .. } => {
                let report = self.state.apply_actions(std::slice::from_ref(action), &self.book, &self.caps);
                for label in &report.completed_by_user {
                    self.world.user_completed(label);
                }
            }
            EventBody::Tick { settled_hash, .. } | EventBody::TickError { settled_hash, .. } => {
                self.ticks += 1;
                self.state.clear_user_input();
                self.last_hash = Some(settled_hash.clone());
            }
            EventBody::Runtime(e) => self.apply_runtime(e),
            EventBody::Advanced { clock, .. } => self.clock = *clock,
        }
    }

    fn apply_runtime(&mut self, e: &RuntimeEvent) {
        match e {
            RuntimeEvent::Status { agent, to, subtask, .. } => {
                if let Some(view) = self.state.robot_mut(*agent) {
                    if *to == AgentStatus::Running {
                        if let Some(i) = view.subtask_queue.iter().position(|l| l == subtask) {
                            view.subtask_queue.remove(i);
                        }
                        view.current_subtask = subtask.clone();
                        self.inflight.insert(*agent, (subtask.clone(), Vec::new()));
                    } else {
                        view.current_subtask.clear();
                        self.inflight.remove(agent);
                    }
                    view.status = *to;
                }
            }
            RuntimeEvent::Program { attempt, .. } => self.saw_attempt(*attempt),
            RuntimeEvent::Message(m) => {
                self.saw_attempt(m.attempt);
                self.next_correlation = self.next_correlation.max(m.correlation_id + 1);
                match &m.kind {
                    MessageKind::Request { call } => {
                        self.calls.insert(m.correlation_id, call.clone());
                    }
                    MessageKind::Result { outcome } => {
                        let call = self.calls.remove(&m.correlation_id);
                        match (outcome, call) {
                            (SkillOutcome::Done, Some(call)) => {
                                if let Err(err) = self.world.apply(m.agent, &call) {
                                    tracing::warn!(%err, "replayed skill call failed");
                                }
                                if let Some((_, done)) = self.inflight.get_mut(&m.agent) {
                                    done.push(call.completed_text());
                                }
                            }
                            (SkillOutcome::Cancelled, _) => {
                                self.world.release(m.agent);
                            }
                            _ => {}
                        }
                    }
                    _ => {}
                }
            }
            RuntimeEvent::SubtaskDone { subtask, attempt, .. } => {
                self.saw_attempt(*attempt);
                self.state.complete_subtask(subtask);
            }
            RuntimeEvent::SubtaskFailed(f) => {
                self.saw_attempt(f.attempt);
                self.world.release(f.agent);
            }
            RuntimeEvent::Transcribed { .. } => {}
        }
    }

    fn saw_attempt(&mut self, attempt: u64) {
        self.next_attempt = self.next_attempt.max(attempt + 1);
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        let planner = self.config.as_ref().map(|c| c.planner).unwrap_or(PlannerKind::Tree);
        snapshot_of(&self.session_id, self.seq, planner, &self.state, self.ticks, self.clock)
    }

    pub fn restore_point(&self) -> RestorePoint {
        RestorePoint {
            world: self.world.clone(),
            clock: self.clock,
            next_correlation: self.next_correlation,
            next_attempt: self.next_attempt,
            statuses: Agent::ROBOTS
                .into_iter()
                .map(|a| (a, self.state.robot(a).map(|v| v.status).unwrap_or_default()))
                .collect(),
        }
    }
}

/// The session's events as an evaluation transcript, so the violation
/// checker runs on live sessions too. User intents come from the parser.
pub fn transcript_of(events: &[Event]) -> Result<Transcript, DecodeError> {
    let mut t = Transcript::default();
    let mut turns = 0usize;
    let mut actions: Vec<HighLevelAction> = Vec::new();
    let mut rejected: Vec<String> = Vec::new();
    for e in events {
        match EventBody::from_event(e)? {
            EventBody::Created { config, .. } => t.push(Record::Header {
                recipe: String::new(),
                planner: config.planner,
                seed: config.seed,
                persona: "interactive".into(),
            }),
            EventBody::UserTurn { text, heard } => {
                t.push(Record::UserTurn {
                    turn: turns,
                    intents: vec![parse_user_text(&heard)],
                    text,
                    heard,
                    injection: None,
                });
                turns += 1;
            }
            EventBody::Action {
                action, rejected: r, ..
            } => {
                actions.push(action);
                rejected.extend(r);
            }
            EventBody::Tick {
                tick_id,
                node_path,
                raw_llm_io,
                observation_hash,
                ..
            } => t.push(Record::Tick {
                tick_id,
                turn: turns.checked_sub(1),
                node_path,
                raw_llm_io,
                actions: std::mem::take(&mut actions),
                rejected: std::mem::take(&mut rejected),
                observation_hash,
            }),
            EventBody::TickError { tick_id, error, .. } => t.push(Record::TickError { tick_id, error }),
            EventBody::Runtime(event) => t.push(Record::Runtime { event }),
            EventBody::Advanced { .. } => {}
        }
    }
    Ok(t)
}
