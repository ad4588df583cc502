//! A live session: one planner, one runtime and the event log they write.
//! Every state change is published as an event, and the fold of those
//! events reproduces the session's snapshot.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use sous_core::llm::LlmBackend;
use sous_core::planner::{Agent, CapabilityTable, HighLevelAction, Planner, PlannerState};
use sous_core::recipe::RecipeBook;
use sous_core::runtime::{KitchenWorld, Runtime, WorldConfig};
use thiserror::Error;

use crate::config::{ConfigError, SessionConfig};
use crate::event::{snapshot_of, transcript_of, DecodeError, Event, EventBody, Fold, SessionSnapshot};

/// Planner ticks allowed per user turn or runtime step.
pub const MAX_CHAIN: usize = 8;

pub const EVENTS_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("chat text is empty")]
    EmptyChat,
    #[error("event log: {0}")]
    Io(#[from] std::io::Error),
    #[error("event log: {0}")]
    Decode(#[from] DecodeError),
    #[error("event log does not start with a created event")]
    NoCreatedEvent,
}

pub struct Session {
    id: String,
    config: SessionConfig,
    book: Arc<RecipeBook>,
    caps: CapabilityTable,
    planner: Planner,
    backend: Arc<dyn LlmBackend>,
    world_cfg: WorldConfig,
    state: PlannerState,
    runtime: Runtime,
    ticks: usize,
    clock: u64,
    last_hash: Option<String>,
    events: Vec<Event>,
    /// Work interrupted by a restart, restarted at the next advance.
    pending_resume: Vec<(Agent, String, Vec<String>)>,
    dir: Option<PathBuf>,
    log: Option<File>,
}

impl Session {
    /// A fresh session. With `dir`, events are appended to
    /// `dir/events.jsonl` and snapshots written to `dir/snapshot.json`.
    pub fn create(id: &str, config: SessionConfig, dir: Option<&Path>) -> Result<Self, SessionError> {
        let r = config.resolve()?;
        let log = match dir {
            Some(d) => {
                std::fs::create_dir_all(d)?;
                Some(OpenOptions::new().create(true).append(true).open(d.join(EVENTS_FILE))?)
            }
            None => None,
        };
        let mut s = Session {
            id: id.to_string(),
            planner: Planner::builtin(config.planner, r.book.clone()),
            runtime: Runtime::new(r.world.clone(), r.faults, config.seed, 0),
            world_cfg: r.world,
            book: r.book,
            caps: CapabilityTable::default(),
            backend: r.backend,
            config: config.clone(),
            state: PlannerState::new(),
            ticks: 0,
            clock: 0,
            last_hash: None,
            events: Vec::new(),
            pending_resume: Vec::new(),
            dir: dir.map(Path::to_path_buf),
            log,
        };
        s.emit(EventBody::Created {
            session_id: id.to_string(),
            config,
        })?;
        s.write_snapshot()?;
        Ok(s)
    }

    /// Rebuilds a session from its event log. The runtime continues from
    /// the replayed world; work that was in flight restarts from its last
    /// finished skill call at the next advance.
    pub fn recover(dir: &Path) -> Result<Self, SessionError> {
        let text = std::fs::read_to_string(dir.join(EVENTS_FILE))?;
        let mut events = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: Event = serde_json::from_str(line).map_err(|e| DecodeError {
                seq: i as u64 + 1,
                message: e.to_string(),
            })?;
            events.push(e);
        }
        let Some(EventBody::Created { session_id, config }) = events.first().map(EventBody::from_event).transpose()?
        else {
            return Err(SessionError::NoCreatedEvent);
        };
        let r = config.resolve()?;
        let mut fold = Fold::new((*r.book).clone(), KitchenWorld::new(&r.world));
        for e in &events {
            fold.apply(e.seq, &EventBody::from_event(e)?);
        }
        let log = OpenOptions::new().append(true).open(dir.join(EVENTS_FILE))?;
        let pending_resume = fold
            .inflight
            .iter()
            .map(|(a, (label, done))| (*a, label.clone(), done.clone()))
            .collect();
        let runtime = Runtime::restored(r.world.clone(), r.faults, config.seed, 1, fold.restore_point());
        Ok(Session {
            id: session_id,
            planner: Planner::builtin(config.planner, r.book.clone()),
            runtime,
            world_cfg: r.world,
            book: r.book,
            caps: CapabilityTable::default(),
            backend: r.backend,
            config,
            state: fold.state,
            ticks: fold.ticks,
            clock: fold.clock,
            last_hash: fold.last_hash,
            events,
            pending_resume,
            dir: Some(dir.to_path_buf()),
            log: Some(log),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Events with sequence numbers above `after`.
    pub fn events_after(&self, after: u64) -> &[Event] {
        let i = self.events.partition_point(|e| e.seq <= after);
        &self.events[i..]
    }

    pub fn last_seq(&self) -> u64 {
        self.events.last().map(|e| e.seq).unwrap_or(0)
    }

    pub fn state(&self) -> &PlannerState {
        &self.state
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        snapshot_of(
            &self.id,
            self.last_seq(),
            self.config.planner,
            &self.state,
            self.ticks,
            self.clock(),
        )
    }

    /// Runtime clock as of the last advance.
    fn clock(&self) -> u64 {
        self.clock
    }

    /// Rebuilds the snapshot from the event log alone.
    pub fn folded_snapshot(&self) -> Result<SessionSnapshot, SessionError> {
        let mut fold = Fold::new((*self.book).clone(), KitchenWorld::new(&self.world_cfg));
        for e in &self.events {
            fold.apply(e.seq, &EventBody::from_event(e)?);
        }
        Ok(fold.snapshot())
    }

    pub fn transcript(&self) -> Result<sous_core::eval::Transcript, SessionError> {
        Ok(transcript_of(&self.events)?)
    }

    fn emit(&mut self, body: EventBody) -> Result<(), SessionError> {
        let e = body.to_event(self.last_seq() + 1);
        if let Some(log) = &mut self.log {
            let mut line = serde_json::to_string(&e).expect("event serializes");
            line.push('\n');
            log.write_all(line.as_bytes())?;
        }
        self.events.push(e);
        Ok(())
    }

    fn write_snapshot(&self) -> Result<(), SessionError> {
        if let Some(dir) = &self.dir {
            let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
            std::fs::write(&tmp, serde_json::to_string_pretty(&self.snapshot()).expect("snapshot serializes"))?;
            std::fs::rename(tmp, dir.join(SNAPSHOT_FILE))?;
        }
        Ok(())
    }

    fn sync_runtime(&mut self, from: usize) -> Result<usize, SessionError> {
        let new: Vec<_> = self.runtime.log()[from..].to_vec();
        for e in new {
            self.emit(EventBody::Runtime(e))?;
        }
        Ok(self.runtime.log().len())
    }

    /// Posts a user message and runs the planner. Returns the new events.
    pub fn post_chat(&mut self, text: &str) -> Result<Vec<Event>, SessionError> {
        let text = text.trim();
        if text.is_empty() {
            return Err(SessionError::EmptyChat);
        }
        let start = self.events.len();
        let seen = self.runtime.log().len();
        let (heard, _) = self.runtime.transcribe(text);
        self.sync_runtime(seen)?;
        self.emit(EventBody::UserTurn {
            text: text.to_string(),
            heard: heard.clone(),
        })?;
        self.state.user_says(&heard);
        self.tick_chain()?;
        self.write_snapshot()?;
        Ok(self.events[start..].to_vec())
    }

    /// Advances the runtime `steps` ticks, letting the planner react after
    /// each. Returns the new events.
    pub fn advance(&mut self, steps: u64) -> Result<Vec<Event>, SessionError> {
        let start = self.events.len();
        for (agent, label, done) in std::mem::take(&mut self.pending_resume) {
            let seen = self.runtime.log().len();
            self.runtime
                .resume(agent, label, done, &mut self.state, self.backend.as_ref());
            self.sync_runtime(seen)?;
        }
        for _ in 0..steps {
            let seen = self.runtime.log().len();
            self.runtime.step(&mut self.state, self.backend.as_ref());
            self.sync_runtime(seen)?;
            self.tick_chain()?;
        }
        self.clock = self.runtime.clock();
        self.emit(EventBody::Advanced {
            steps,
            clock: self.clock,
        })?;
        self.write_snapshot()?;
        Ok(self.events[start..].to_vec())
    }

    /// Ticks while there is input or the observation changed since the
    /// planner last settled.
    fn tick_chain(&mut self) -> Result<(), SessionError> {
        for _ in 0..MAX_CHAIN {
            let obs = self.state.observation();
            let hash = obs.hash();
            if self.state.user_input.is_empty() && self.last_hash.as_deref() == Some(hash.as_str()) {
                break;
            }
            let tick_id = self.ticks;
            self.ticks += 1;
            match self.planner.tick(&obs, self.backend.as_ref()) {
                Ok(res) => {
                    let talk_only = res
                        .actions
                        .iter()
                        .all(|a| matches!(a, HighLevelAction::Say { .. } | HighLevelAction::NoOp));
                    for action in &res.actions {
                        let report = self
                            .state
                            .apply_actions(std::slice::from_ref(action), &self.book, &self.caps);
                        self.emit(EventBody::Action {
                            tick_id,
                            action: action.clone(),
                            rejected: report.rejected.iter().map(|r| r.error.to_string()).collect(),
                        })?;
                        let seen = self.runtime.log().len();
                        for agent in &report.interrupts {
                            self.runtime.cancel(*agent, &mut self.state);
                        }
                        for label in &report.completed_by_user {
                            self.runtime.user_completed(label);
                        }
                        self.sync_runtime(seen)?;
                    }
                    self.state.clear_user_input();
                    let settled = if talk_only { self.state.observation().hash() } else { hash.clone() };
                    self.last_hash = Some(settled.clone());
                    self.emit(EventBody::Tick {
                        tick_id,
                        node_path: res.path,
                        raw_llm_io: res.records,
                        observation_hash: hash,
                        settled_hash: settled,
                    })?;
                }
                Err(e) => {
                    self.state.clear_user_input();
                    let settled = self.state.observation().hash();
                    self.last_hash = Some(settled.clone());
                    self.emit(EventBody::TickError {
                        tick_id,
                        error: e.to_string(),
                        settled_hash: settled,
                    })?;
                    break;
                }
            }
        }
        Ok(())
    }
}
