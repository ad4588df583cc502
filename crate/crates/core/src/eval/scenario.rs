//! Closed-loop scenario driver: persona, planner and runtime take turns
//! until the recipe finishes or a budget runs out.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::persona::{Persona, PersonaScript, Turn};
use super::transcript::{EndReason, Record, Transcript};
use crate::llm::LlmBackend;
use crate::planner::{CapabilityTable, HighLevelAction, Planner, PlannerKind, PlannerState};
use crate::recipe::RecipeBook;
use crate::runtime::{FaultConfig, Runtime, WorldConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub planner: PlannerKind,
    pub seed: u64,
    pub turn_budget: usize,
    pub step_budget: u64,
    /// Planner ticks allowed between two runtime steps.
    pub max_chain: usize,
    pub world: WorldConfig,
    pub faults: FaultConfig,
    /// Run index within a batch; separates fault streams of equal seeds.
    pub run: u64,
}

impl ScenarioConfig {
    pub fn new(planner: PlannerKind, seed: u64) -> Self {
        ScenarioConfig {
            planner,
            seed,
            turn_budget: 200,
            step_budget: 5_000,
            max_chain: 8,
            world: WorldConfig::default(),
            faults: FaultConfig::none(),
            run: 0,
        }
    }
}

/// Quiet rounds before the persona nudges, and nudges without progress
/// before the run is declared stalled.
const IDLE_ROUNDS: usize = 3;
const MAX_NUDGES: usize = 4;

struct Driver<'a> {
    planner: Planner,
    book: Arc<RecipeBook>,
    caps: CapabilityTable,
    backend: &'a dyn LlmBackend,
    state: PlannerState,
    runtime: Runtime,
    transcript: Transcript,
    log_seen: usize,
    turns: usize,
    ticks: usize,
    last_hash: Option<String>,
}

impl Driver<'_> {
    fn sync_runtime(&mut self) {
        for e in &self.runtime.log()[self.log_seen..] {
            self.transcript.records.push(Record::Runtime { event: e.clone() });
        }
        self.log_seen = self.runtime.log().len();
    }

    fn user_turn(&mut self, turn: Turn) {
        let (heard, _) = self.runtime.transcribe(&turn.text);
        self.sync_runtime();
        self.transcript.push(Record::UserTurn {
            turn: self.turns,
            text: turn.text,
            heard: heard.clone(),
            intents: vec![turn.intent],
            injection: turn.injection,
        });
        self.turns += 1;
        self.state.user_says(&heard);
    }

    /// Ticks while there is input or the observation changed. Returns the
    /// number of ticks run.
    fn tick_chain(&mut self, max_chain: usize) -> usize {
        let mut n = 0;
        while n < max_chain {
            let obs = self.state.observation();
            let hash = obs.hash();
            if self.state.user_input.is_empty() && self.last_hash.as_deref() == Some(hash.as_str()) {
                break;
            }
            n += 1;
            let tick_id = self.ticks;
            self.ticks += 1;
            let turn = self.turns.checked_sub(1);
            match self.planner.tick(&obs, self.backend) {
                Ok(res) => {
                    // A tick that only talks waits for news; one that changed
                    // the plan gets to look at the result.
                    let talk_only = res
                        .actions
                        .iter()
                        .all(|a| matches!(a, HighLevelAction::Say { .. } | HighLevelAction::NoOp));
                    let report = self.state.apply_actions(&res.actions, &self.book, &self.caps);
                    for agent in &report.interrupts {
                        self.runtime.cancel(*agent, &mut self.state);
                    }
                    for label in &report.completed_by_user {
                        self.runtime.user_completed(label);
                    }
                    self.sync_runtime();
                    self.transcript.push(Record::Tick {
                        tick_id,
                        turn,
                        node_path: res.path,
                        raw_llm_io: res.records,
                        actions: res.actions,
                        rejected: report
                            .rejected
                            .iter()
                            .map(|r| format!("{}: {}", r.action.kind(), r.error))
                            .collect(),
                        observation_hash: hash.clone(),
                    });
                    self.state.clear_user_input();
                    self.last_hash = Some(if talk_only { self.state.observation().hash() } else { hash });
                }
                Err(e) => {
                    self.transcript.push(Record::TickError {
                        tick_id,
                        error: e.to_string(),
                    });
                    self.state.clear_user_input();
                    self.last_hash = Some(self.state.observation().hash());
                    break;
                }
            }
        }
        n
    }
}

/// Runs one persona against one planner and returns the full transcript.
/// The backend serves both planner nodes and code generation.
pub fn run_scenario(
    script: &PersonaScript,
    cfg: &ScenarioConfig,
    book: Arc<RecipeBook>,
    backend: &dyn LlmBackend,
) -> Transcript {
    let mut persona = Persona::new(script.clone());
    let mut d = Driver {
        planner: Planner::builtin(cfg.planner, book.clone()),
        book,
        caps: CapabilityTable::default(),
        backend,
        state: PlannerState::new(),
        runtime: Runtime::new(cfg.world.clone(), cfg.faults.clone(), cfg.seed, cfg.run),
        transcript: Transcript::default(),
        log_seen: 0,
        turns: 0,
        ticks: 0,
        last_hash: None,
    };
    d.transcript.push(Record::Header {
        recipe: script.recipe.clone(),
        planner: cfg.planner,
        seed: cfg.seed,
        persona: script.name.clone(),
    });

    let mut idle = 0;
    let mut nudges = 0;
    let mut last_done = 0;
    let reason = loop {
        if d.state.is_finished() {
            break EndReason::Finished;
        }
        if d.turns >= cfg.turn_budget {
            break EndReason::TurnBudgetExceeded;
        }
        if d.runtime.clock() >= cfg.step_budget {
            break EndReason::StepBudgetExceeded;
        }
        if d.state.completed.len() != last_done {
            last_done = d.state.completed.len();
            nudges = 0;
        }
        let turn = if idle >= IDLE_ROUNDS {
            if nudges >= MAX_NUDGES {
                break EndReason::Stalled;
            }
            idle = 0;
            nudges += 1;
            Some(persona.nudge(&d.state))
        } else {
            persona.next_turn(&d.state)
        };
        let spoke = turn.is_some();
        if let Some(turn) = turn {
            d.user_turn(turn);
        }
        let ticked = d.tick_chain(cfg.max_chain);
        let quiet = !spoke && ticked == 0 && d.runtime.is_quiescent(&d.state) && d.state.user_queue.is_empty();
        idle = if quiet { idle + 1 } else { 0 };
        d.runtime.step(&mut d.state, d.backend);
        d.sync_runtime();
    };

    let (recipe_nodes, recipe_done) = d
        .state
        .dag
        .as_ref()
        .map(|dag| (dag.len(), dag.nodes().iter().filter(|n| n.done).count()))
        .unwrap_or((0, 0));
    d.transcript.push(Record::End {
        finished: reason == EndReason::Finished,
        reason,
        turns: d.turns,
        ticks: d.ticks,
        steps: d.runtime.clock(),
        recipe: d.state.recipe_name().to_string(),
        completed: d.state.completed.clone(),
        recipe_nodes,
        recipe_done,
    });
    d.transcript
}
