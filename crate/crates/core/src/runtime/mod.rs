//! Simulated robot executors. Each robot pops subtasks from its queue, asks
//! the code generator for a skill program, and runs the calls one at a time
//! over a request/feedback/result protocol against the kitchen world.

mod check;
mod fault;
mod world;

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

pub use check::{check_log, LogViolation};
pub use fault::{FaultCategory, FaultConfig, FaultConfigError, FaultInjector, Module, ScriptedFault};
pub use world::{
    ConservationError, KitchenWorld, Place, R1Config, R2Config, SkillFailure, WorldConfig, WorldError, BUILTIN_WORLD,
};

use crate::llm::{CompletionRequest, Decoding, LlmBackend, CODEGEN_NODE};
use crate::planner::{Agent, AgentStatus, PlannerState};
use crate::skills::{render_codegen_prompt, SkillCall, SkillTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MessageKind {
    Request { call: SkillCall },
    Feedback { progress: f64 },
    Result { outcome: SkillOutcome },
    Cancel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum SkillOutcome {
    Done,
    Failed { cause: FailureCause },
    Cancelled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCause {
    World(SkillFailure),
    Injected(FaultCategory),
    Codegen(String),
}

impl FailureCause {
    pub fn module(&self) -> Module {
        match self {
            FailureCause::World(_) => Module::VisuomotorSkill,
            FailureCause::Injected(c) => c.module(),
            FailureCause::Codegen(_) => Module::TaskPlanner,
        }
    }

    pub fn category(&self) -> Option<FaultCategory> {
        match self {
            FailureCause::Injected(c) => Some(*c),
            _ => None,
        }
    }
}

/// One protocol message between an executor and its skill server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillMessage {
    pub correlation_id: u64,
    pub agent: Agent,
    pub attempt: u64,
    pub tick: u64,
    #[serde(flatten)]
    pub kind: MessageKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub tick: u64,
    pub agent: Agent,
    pub attempt: u64,
    pub subtask: String,
    pub module: Module,
    pub category: Option<FaultCategory>,
    pub cause: FailureCause,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum RuntimeEvent {
    Status {
        tick: u64,
        agent: Agent,
        from: AgentStatus,
        to: AgentStatus,
        subtask: String,
    },
    Program {
        tick: u64,
        agent: Agent,
        attempt: u64,
        subtask: String,
        code: String,
    },
    Message(SkillMessage),
    SubtaskDone {
        tick: u64,
        agent: Agent,
        attempt: u64,
        subtask: String,
    },
    SubtaskFailed(FailureRecord),
    /// The user's words as the planner received them after transcription.
    Transcribed {
        tick: u64,
        heard: String,
        record: Option<FailureRecord>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CancelAck {
    Cancelled,
    NothingRunning,
}

#[derive(Debug, Clone)]
struct InFlight {
    correlation_id: u64,
    call: SkillCall,
    elapsed: u64,
    duration: u64,
}

#[derive(Debug, Clone)]
struct Active {
    subtask: String,
    attempt: u64,
    remaining: VecDeque<SkillCall>,
    completed: Vec<String>,
    flight: InFlight,
}

#[derive(Debug, Clone)]
struct Executor {
    status: AgentStatus,
    active: Option<Active>,
}

/// Runtime state rebuilt from an event log.
#[derive(Debug, Clone)]
pub struct RestorePoint {
    pub world: KitchenWorld,
    pub clock: u64,
    pub next_correlation: u64,
    pub next_attempt: u64,
    pub statuses: BTreeMap<Agent, AgentStatus>,
}

pub struct Runtime {
    cfg: WorldConfig,
    world: KitchenWorld,
    skills: SkillTable,
    faults: FaultInjector,
    executors: BTreeMap<Agent, Executor>,
    clock: u64,
    next_correlation: u64,
    next_attempt: u64,
    log: Vec<RuntimeEvent>,
    breaches: Vec<(u64, ConservationError)>,
}

impl Runtime {
    pub fn new(cfg: WorldConfig, faults: FaultConfig, seed: u64, run: u64) -> Self {
        let executors = Agent::ROBOTS
            .into_iter()
            .map(|a| {
                (
                    a,
                    Executor {
                        status: AgentStatus::Idle,
                        active: None,
                    },
                )
            })
            .collect();
        Runtime {
            world: KitchenWorld::new(&cfg),
            cfg,
            skills: SkillTable::default(),
            faults: FaultInjector::new(faults, seed, run),
            executors,
            clock: 0,
            next_correlation: 1,
            next_attempt: 1,
            log: Vec::new(),
            breaches: Vec::new(),
        }
    }

    pub fn builtin(seed: u64) -> Self {
        Self::new(WorldConfig::default(), FaultConfig::none(), seed, 0)
    }

    pub fn world(&self) -> &KitchenWorld {
        &self.world
    }

    pub fn world_mut(&mut self) -> &mut KitchenWorld {
        &mut self.world
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn log(&self) -> &[RuntimeEvent] {
        &self.log
    }

    pub fn conservation_breaches(&self) -> &[(u64, ConservationError)] {
        &self.breaches
    }

    pub fn failures(&self) -> impl Iterator<Item = &FailureRecord> {
        self.log.iter().filter_map(|e| match e {
            RuntimeEvent::SubtaskFailed(f) => Some(f),
            RuntimeEvent::Transcribed { record: Some(f), .. } => Some(f),
            _ => None,
        })
    }

    pub fn status(&self, agent: Agent) -> AgentStatus {
        self.executors.get(&agent).map(|e| e.status).unwrap_or_default()
    }

    pub fn is_busy(&self, agent: Agent) -> bool {
        self.executors.get(&agent).is_some_and(|e| e.active.is_some())
    }

    /// Nothing in flight and every robot queue empty.
    pub fn is_quiescent(&self, state: &PlannerState) -> bool {
        Agent::ROBOTS
            .into_iter()
            .all(|a| !self.is_busy(a) && state.queue(a).is_empty())
    }

    /// Calls finished so far for the agent's current subtask, in the form
    /// the code generator expects.
    pub fn completed_calls(&self, agent: Agent) -> &[String] {
        self.executors
            .get(&agent)
            .and_then(|e| e.active.as_ref())
            .map(|a| a.completed.as_slice())
            .unwrap_or(&[])
    }

    fn emit(&mut self, e: RuntimeEvent) -> RuntimeEvent {
        self.log.push(e.clone());
        e
    }

    fn message(&mut self, agent: Agent, attempt: u64, correlation_id: u64, kind: MessageKind) -> RuntimeEvent {
        self.emit(RuntimeEvent::Message(SkillMessage {
            correlation_id,
            agent,
            attempt,
            tick: self.clock,
            kind,
        }))
    }

    fn set_status(&mut self, agent: Agent, to: AgentStatus, subtask: &str, state: &mut PlannerState, out: &mut Vec<RuntimeEvent>) {
        let ex = self.executors.get_mut(&agent).expect("robot executor");
        let from = ex.status;
        ex.status = to;
        if let Some(view) = state.robot_mut(agent) {
            view.status = to;
            view.current_subtask = if to == AgentStatus::Running { subtask.to_string() } else { String::new() };
        }
        if from != to {
            let e = self.emit(RuntimeEvent::Status {
                tick: self.clock,
                agent,
                from,
                to,
                subtask: subtask.to_string(),
            });
            out.push(e);
        }
    }

    /// The user's utterance as the planner hears it. Interrupt commands may
    /// be garbled by a category D fault.
    pub fn transcribe(&mut self, text: &str) -> (String, Option<FailureRecord>) {
        let is_interrupt = matches!(crate::phrases::parse_user_text(text), crate::phrases::Intent::InterruptRequest { .. });
        if !is_interrupt || !self.faults.roll(FaultCategory::D, self.clock) {
            return (text.to_string(), None);
        }
        let heard = text.replace("R1", "are one").replace("R2", "are two").replace("stop", "top");
        let agent = match crate::phrases::parse_user_text(text) {
            crate::phrases::Intent::InterruptRequest { agent } => agent,
            _ => Agent::User,
        };
        let record = FailureRecord {
            tick: self.clock,
            agent,
            attempt: 0,
            subtask: String::new(),
            module: Module::TaskPlanner,
            category: Some(FaultCategory::D),
            cause: FailureCause::Injected(FaultCategory::D),
        };
        self.emit(RuntimeEvent::Transcribed {
            tick: self.clock,
            heard: heard.clone(),
            record: Some(record.clone()),
        });
        (heard, Some(record))
    }

    /// World effect of a subtask the user reports as done.
    pub fn user_completed(&mut self, label: &str) {
        self.world.user_completed(label);
    }

    /// Advances one simulated tick for every robot.
    pub fn step(&mut self, state: &mut PlannerState, codegen: &dyn LlmBackend) -> Vec<RuntimeEvent> {
        self.clock += 1;
        let mut out = Vec::new();
        for agent in Agent::ROBOTS {
            if self.is_busy(agent) {
                self.advance(agent, state, &mut out);
            } else if !state.queue(agent).is_empty() {
                let label = state.robot_mut(agent).expect("robot").subtask_queue.remove(0);
                self.start(agent, label, Vec::new(), state, codegen, &mut out);
            }
        }
        out
    }

    /// Restarts `label` on `agent` with `completed` calls already done, as
    /// after a service restart.
    pub fn resume(
        &mut self,
        agent: Agent,
        label: String,
        completed: Vec<String>,
        state: &mut PlannerState,
        codegen: &dyn LlmBackend,
    ) -> Vec<RuntimeEvent> {
        let mut out = Vec::new();
        if let Some(ex) = self.executors.get_mut(&agent) {
            ex.active = None;
        }
        self.start(agent, label, completed, state, codegen, &mut out);
        out
    }

    /// A runtime picking up where a recovered log left off. Nothing is in
    /// flight; interrupted work restarts through [`Runtime::resume`].
    pub fn restored(cfg: WorldConfig, faults: FaultConfig, seed: u64, run: u64, point: RestorePoint) -> Self {
        let mut rt = Self::new(cfg, faults, seed, run);
        rt.world = point.world;
        rt.clock = point.clock;
        rt.next_correlation = point.next_correlation;
        rt.next_attempt = point.next_attempt;
        for (agent, status) in point.statuses {
            if let Some(ex) = rt.executors.get_mut(&agent) {
                ex.status = status;
            }
        }
        rt
    }

    fn start(
        &mut self,
        agent: Agent,
        label: String,
        completed: Vec<String>,
        state: &mut PlannerState,
        codegen: &dyn LlmBackend,
        out: &mut Vec<RuntimeEvent>,
    ) {
        let attempt = self.next_attempt;
        self.next_attempt += 1;
        self.set_status(agent, AgentStatus::Running, &label, state, out);
        if self.faults.roll(FaultCategory::E, self.clock) {
            self.fail(agent, attempt, &label, FailureCause::Injected(FaultCategory::E), state, out);
            return;
        }
        let calls = match self.generate(agent, &label, &completed, codegen) {
            Ok((code, calls)) => {
                let e = self.emit(RuntimeEvent::Program {
                    tick: self.clock,
                    agent,
                    attempt,
                    subtask: label.clone(),
                    code,
                });
                out.push(e);
                calls
            }
            Err(reason) => {
                self.fail(agent, attempt, &label, FailureCause::Codegen(reason), state, out);
                return;
            }
        };
        let mut remaining: VecDeque<SkillCall> = calls.into();
        let first = remaining.pop_front().expect("non-empty program");
        let flight = self.request(agent, attempt, first, out);
        self.executors.get_mut(&agent).expect("robot").active = Some(Active {
            subtask: label,
            attempt,
            remaining,
            completed,
            flight,
        });
    }

    fn generate(
        &self,
        agent: Agent,
        label: &str,
        completed: &[String],
        codegen: &dyn LlmBackend,
    ) -> Result<(String, Vec<SkillCall>), String> {
        let prompt = render_codegen_prompt(label, completed).map_err(|e| e.to_string())?;
        let req = CompletionRequest {
            node_name: CODEGEN_NODE.to_string(),
            system: String::new(),
            instructions: String::new(),
            examples: Vec::new(),
            rendered_observation: prompt,
            decoding: Decoding::default(),
        };
        let code = codegen.complete(&req).map_err(|e| e.to_string())?;
        let program = self.skills.parse_program(&code).map_err(|e| e.to_string())?;
        self.skills
            .validate_program(&program, agent, &self.cfg.constants())
            .map_err(|errs| errs.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))?;
        if program.calls.is_empty() {
            return Err("program has no calls".into());
        }
        Ok((code, program.calls))
    }

    fn request(&mut self, agent: Agent, attempt: u64, call: SkillCall, out: &mut Vec<RuntimeEvent>) -> InFlight {
        let correlation_id = self.next_correlation;
        self.next_correlation += 1;
        let e = self.message(agent, attempt, correlation_id, MessageKind::Request { call: call.clone() });
        out.push(e);
        InFlight {
            correlation_id,
            duration: self.cfg.duration(&call.skill),
            call,
            elapsed: 0,
        }
    }

    fn advance(&mut self, agent: Agent, state: &mut PlannerState, out: &mut Vec<RuntimeEvent>) {
        let interval = self.cfg.feedback_interval.max(1);
        let active = self.executors.get_mut(&agent).and_then(|e| e.active.as_mut()).expect("busy executor");
        active.flight.elapsed += 1;
        let (elapsed, duration, corr, attempt) =
            (active.flight.elapsed, active.flight.duration, active.flight.correlation_id, active.attempt);
        if elapsed < duration {
            if elapsed % interval == 0 {
                let e = self.message(
                    agent,
                    attempt,
                    corr,
                    MessageKind::Feedback {
                        progress: elapsed as f64 / duration as f64,
                    },
                );
                out.push(e);
            }
            return;
        }
        let call = active.flight.call.clone();
        let label = active.subtask.clone();
        match self.execute_skill(agent, &call) {
            Ok(()) => {
                let e = self.message(agent, attempt, corr, MessageKind::Result { outcome: SkillOutcome::Done });
                out.push(e);
                let active = self.executors.get_mut(&agent).and_then(|e| e.active.as_mut()).expect("busy");
                active.completed.push(call.completed_text());
                match active.remaining.pop_front() {
                    Some(next) => {
                        let flight = self.request(agent, attempt, next, out);
                        self.executors.get_mut(&agent).and_then(|e| e.active.as_mut()).expect("busy").flight = flight;
                    }
                    None => {
                        self.executors.get_mut(&agent).expect("robot").active = None;
                        self.set_status(agent, AgentStatus::Idle, &label, state, out);
                        state.complete_subtask(&label);
                        let e = self.emit(RuntimeEvent::SubtaskDone {
                            tick: self.clock,
                            agent,
                            attempt,
                            subtask: label,
                        });
                        out.push(e);
                    }
                }
            }
            Err(cause) => {
                let e = self.message(
                    agent,
                    attempt,
                    corr,
                    MessageKind::Result {
                        outcome: SkillOutcome::Failed { cause: cause.clone() },
                    },
                );
                out.push(e);
                self.executors.get_mut(&agent).expect("robot").active = None;
                self.fail(agent, attempt, &label, cause, state, out);
            }
        }
    }

    /// Applies one finished skill call to the world, possibly turning it
    /// into an injected failure.
    fn execute_skill(&mut self, agent: Agent, call: &SkillCall) -> Result<(), FailureCause> {
        let holding = self.world.held_by(agent).is_some();
        let arg = call.args.first().map(String::as_str).unwrap_or("");
        for cat in [FaultCategory::A, FaultCategory::B, FaultCategory::C, FaultCategory::F] {
            if cat.applies_to(&call.skill, arg, holding) && self.faults.roll(cat, self.clock) {
                return Err(FailureCause::Injected(cat));
            }
        }
        let r = self.world.apply(agent, call).map_err(FailureCause::World);
        if let Err(e) = self.world.check_conservation() {
            self.breaches.push((self.clock, e));
        }
        r
    }

    fn fail(
        &mut self,
        agent: Agent,
        attempt: u64,
        label: &str,
        cause: FailureCause,
        state: &mut PlannerState,
        out: &mut Vec<RuntimeEvent>,
    ) {
        self.world.release(agent);
        self.set_status(agent, AgentStatus::Idle, label, state, out);
        let e = self.emit(RuntimeEvent::SubtaskFailed(FailureRecord {
            tick: self.clock,
            agent,
            attempt,
            subtask: label.to_string(),
            module: cause.module(),
            category: cause.category(),
            cause,
        }));
        out.push(e);
    }

    /// Stops the agent's in-flight skill. Idempotent; a no-op when idle.
    pub fn cancel(&mut self, agent: Agent, state: &mut PlannerState) -> (CancelAck, Vec<RuntimeEvent>) {
        let mut out = Vec::new();
        let Some(active) = self.executors.get_mut(&agent).and_then(|e| e.active.take()) else {
            return (CancelAck::NothingRunning, out);
        };
        let (corr, attempt) = (active.flight.correlation_id, active.attempt);
        let e = self.message(agent, attempt, corr, MessageKind::Cancel);
        out.push(e);
        let e = self.message(
            agent,
            attempt,
            corr,
            MessageKind::Result {
                outcome: SkillOutcome::Cancelled,
            },
        );
        out.push(e);
        self.world.release(agent);
        self.set_status(agent, AgentStatus::Interrupted, &active.subtask, state, &mut out);
        (CancelAck::Cancelled, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::CompliantBackend;
    use crate::planner::CapabilityTable;
    use crate::recipe::RecipeBook;
    use std::sync::Arc;

    fn backend() -> CompliantBackend {
        CompliantBackend::new(Arc::new(RecipeBook::builtin()), CapabilityTable::default())
    }

    fn kinds(events: &[RuntimeEvent]) -> Vec<String> {
        events
            .iter()
            .filter_map(|e| match e {
                RuntimeEvent::Message(m) => match &m.kind {
                    MessageKind::Request { call } => Some(format!("req {call}")),
                    MessageKind::Result { outcome } => Some(format!("res {outcome:?}")),
                    MessageKind::Cancel => Some("cancel".into()),
                    MessageKind::Feedback { .. } => None,
                },
                _ => None,
            })
            .collect()
    }

    fn run_until_idle(rt: &mut Runtime, state: &mut PlannerState) {
        let b = backend();
        for _ in 0..500 {
            rt.step(state, &b);
            if rt.is_quiescent(state) {
                return;
            }
        }
        panic!("runtime did not settle");
    }

    #[test]
    fn get_salt_runs_four_calls_in_order() {
        let mut rt = Runtime::builtin(0);
        let mut state = PlannerState::new();
        state.r2.subtask_queue.push("get salt".into());
        let first = rt.step(&mut state, &backend());
        assert_eq!(state.r2.status, AgentStatus::Running);
        assert_eq!(state.r2.current_subtask, "get salt");
        assert!(matches!(first[0], RuntimeEvent::Status { to: AgentStatus::Running, .. }));
        run_until_idle(&mut rt, &mut state);
        assert_eq!(
            kinds(rt.log()),
            [
                "req go_to(PANTRY)",
                "res Done",
                "req pick_up_item(SALT)",
                "res Done",
                "req go_to(TABLE)",
                "res Done",
                "req place_item_at(TABLE)",
                "res Done",
            ]
        );
        assert_eq!(state.r2.status, AgentStatus::Idle);
        assert!(state.r2.current_subtask.is_empty());
        assert_eq!(state.completed, ["get salt"]);
        assert!(matches!(rt.log().last(), Some(RuntimeEvent::SubtaskDone { .. })));
        assert_eq!(rt.world().location_of("SALT"), Some(&Place::Location("TABLE".into())));
        assert!(check_log(rt.log()).is_empty());
    }

    #[test]
    fn empty_queue_emits_nothing() {
        let mut rt = Runtime::builtin(0);
        let mut state = PlannerState::new();
        assert!(rt.step(&mut state, &backend()).is_empty());
        assert!(rt.log().is_empty());
    }

    #[test]
    fn cancel_mid_skill_stops_requests() {
        let mut rt = Runtime::builtin(0);
        let mut state = PlannerState::new();
        state.r2.subtask_queue.push("get salt".into());
        for _ in 0..13 {
            rt.step(&mut state, &backend());
        }
        let (ack, ev) = rt.cancel(Agent::R2, &mut state);
        assert_eq!(ack, CancelAck::Cancelled);
        assert_eq!(kinds(&ev), ["cancel", "res Cancelled"]);
        assert_eq!(state.r2.status, AgentStatus::Interrupted);
        assert!(state.r2.current_subtask.is_empty());
        let before = rt.log().len();
        let (again, ev2) = rt.cancel(Agent::R2, &mut state);
        assert_eq!((again, ev2.len(), rt.log().len()), (CancelAck::NothingRunning, 0, before));
        for _ in 0..50 {
            rt.step(&mut state, &backend());
        }
        assert_eq!(rt.log().len(), before);
        assert!(check_log(rt.log()).is_empty());
        rt.world().check_conservation().unwrap();
    }

    #[test]
    fn cancel_when_idle_is_noop() {
        let mut rt = Runtime::builtin(0);
        let mut state = PlannerState::new();
        let snapshot = state.clone();
        assert_eq!(rt.cancel(Agent::R1, &mut state).0, CancelAck::NothingRunning);
        assert_eq!(state, snapshot);
    }

    #[test]
    fn certain_pick_fault_fails_with_tag() {
        let mut rt = Runtime::new(WorldConfig::default(), FaultConfig::none().with(FaultCategory::A, 1.0), 3, 0);
        let mut state = PlannerState::new();
        state.r2.subtask_queue.push("get salt".into());
        run_until_idle(&mut rt, &mut state);
        let f: Vec<&FailureRecord> = rt.failures().collect();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].category, Some(FaultCategory::A));
        assert_eq!(f[0].module, Module::VisuomotorSkill);
        assert_eq!(state.r2.status, AgentStatus::Idle);
        assert!(state.completed.is_empty());
    }

    #[test]
    fn unparseable_program_is_a_planner_failure() {
        let mut rt = Runtime::builtin(0);
        let mut state = PlannerState::new();
        state.r2.subtask_queue.push("get salt".into());
        let bad = crate::llm::ScriptedBackend::new(vec![crate::llm::ScriptedRule::new("*", "import os\nos.remove('/')")]);
        rt.step(&mut state, &bad);
        let f: Vec<&FailureRecord> = rt.failures().collect();
        assert_eq!(f[0].module, Module::TaskPlanner);
        assert!(matches!(f[0].cause, FailureCause::Codegen(_)));
    }

    #[test]
    fn resume_skips_completed_calls() {
        let mut rt = Runtime::builtin(0);
        let mut state = PlannerState::new();
        rt.world_mut().apply(Agent::R2, &SkillCall::new("go_to", &["PANTRY"])).unwrap();
        rt.resume(Agent::R2, "get salt".into(), vec!["go_to('PANTRY')".into()], &mut state, &backend());
        run_until_idle(&mut rt, &mut state);
        assert_eq!(kinds(rt.log())[0], "req pick_up_item(SALT)");
        assert_eq!(state.completed, ["get salt"]);
    }

    #[test]
    fn garbled_interrupt_is_attributed_to_planner() {
        let mut rt = Runtime::new(WorldConfig::default(), FaultConfig::none().with(FaultCategory::D, 1.0), 0, 0);
        let (heard, rec) = rt.transcribe("R2, stop!");
        assert_eq!(crate::phrases::parse_user_text(&heard), crate::phrases::Intent::Smalltalk);
        assert_eq!(rec.unwrap().module, Module::TaskPlanner);
        assert_eq!(rt.transcribe("Yes, please go ahead.").0, "Yes, please go ahead.");
    }
}
