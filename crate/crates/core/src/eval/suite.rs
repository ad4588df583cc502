//! Batch experiments: the persona suite, the malformed-output sweep and
//! the fault-attribution run, with JSON and aligned-text reports.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::check::{check_violations, count_by_category, ViolationReport};
use super::persona::{Difficulty, PersonaScript};
use super::scenario::{run_scenario, ScenarioConfig};
use super::score::{score_unit_tests, Score};
use super::transcript::{EndReason, Record, Transcript};
use crate::llm::{CompliantBackend, LlmBackend, SloppyBackend};
use crate::planner::{Agent, CapabilityTable, PlannerKind, PlannerState};
use crate::recipe::RecipeBook;
use crate::runtime::{FailureRecord, FaultCategory, FaultConfig, Runtime, WorldConfig};
use crate::skills::synthesize_program;

pub const SUITE_RECIPES: [&str; 5] = ["Tossed Salad", "Caesar Salad", "Bibimbap", "Turkey Sandwich", "Sundae"];

/// Outcome of one scenario run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub recipe: String,
    pub difficulty: Difficulty,
    pub planner: PlannerKind,
    pub seed: u64,
    pub finished: bool,
    pub reason: EndReason,
    pub passed: usize,
    pub total: usize,
    pub pass_rate: f64,
    pub act_without_permission: usize,
    pub lying: usize,
    pub ignore_user: usize,
    pub completion_rate: f64,
    pub turns: usize,
    pub ticks: usize,
}

/// A run with its artifacts, for callers that inspect more than the row.
pub struct RunOutput {
    pub row: RunRow,
    pub transcript: Transcript,
    pub score: Score,
    pub violations: Vec<ViolationReport>,
}

/// Scores and checks a finished transcript.
pub fn summarize(
    t: &Transcript,
    script: &PersonaScript,
    difficulty: Difficulty,
    planner: PlannerKind,
    seed: u64,
    caps: &CapabilityTable,
) -> (RunRow, Score, Vec<ViolationReport>) {
    let score = score_unit_tests(t, script, caps);
    let violations = check_violations(t).unwrap_or_default();
    let [awp, lying, ignore] = count_by_category(&violations);
    let (reason, turns, ticks) = match t.end() {
        Some(Record::End { reason, turns, ticks, .. }) => (*reason, *turns, *ticks),
        _ => (EndReason::Stalled, 0, 0),
    };
    let row = RunRow {
        recipe: script.recipe.clone(),
        difficulty,
        planner,
        seed,
        finished: t.finished(),
        reason,
        passed: score.passed(),
        total: score.total(),
        pass_rate: score.pass_rate(),
        act_without_permission: awp,
        lying,
        ignore_user: ignore,
        completion_rate: t.completion_rate(),
        turns,
        ticks,
    };
    (row, score, violations)
}

/// Runs one persona of the given difficulty on `recipe`.
pub fn run_one(
    recipe: &str,
    difficulty: Difficulty,
    cfg: &ScenarioConfig,
    book: &Arc<RecipeBook>,
    backend: &dyn LlmBackend,
) -> Option<RunOutput> {
    let dag = book.get(recipe)?;
    let script = PersonaScript::for_difficulty(difficulty, dag, cfg.seed);
    let transcript = run_scenario(&script, cfg, book.clone(), backend);
    let (row, score, violations) =
        summarize(&transcript, &script, difficulty, cfg.planner, cfg.seed, &CapabilityTable::default());
    Some(RunOutput {
        row,
        transcript,
        score,
        violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSpec {
    pub recipes: Vec<String>,
    pub difficulties: Vec<Difficulty>,
    pub planners: Vec<PlannerKind>,
    pub reps: u64,
    pub base_seed: u64,
}

impl Default for SuiteSpec {
    fn default() -> Self {
        SuiteSpec {
            recipes: SUITE_RECIPES.iter().map(|s| s.to_string()).collect(),
            difficulties: vec![Difficulty::Easy, Difficulty::Hard],
            planners: vec![PlannerKind::Tree],
            reps: 3,
            base_seed: 0,
        }
    }
}

/// Aggregate over the runs sharing a difficulty and planner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub difficulty: Difficulty,
    pub planner: PlannerKind,
    pub runs: usize,
    pub finished: usize,
    pub passed: usize,
    pub total: usize,
    pub pass_rate: f64,
    pub act_without_permission: usize,
    pub lying: usize,
    pub ignore_user: usize,
    pub completion_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub runs: Vec<RunRow>,
    pub aggregate: Vec<AggregateRow>,
}

pub fn aggregate(runs: &[RunRow]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(String, String), Vec<&RunRow>> = BTreeMap::new();
    for r in runs {
        groups
            .entry((format!("{:?}", r.difficulty), format!("{:?}", r.planner)))
            .or_default()
            .push(r);
    }
    let mut out: Vec<AggregateRow> = groups
        .into_values()
        .map(|g| {
            let passed: usize = g.iter().map(|r| r.passed).sum();
            let total: usize = g.iter().map(|r| r.total).sum();
            AggregateRow {
                difficulty: g[0].difficulty,
                planner: g[0].planner,
                runs: g.len(),
                finished: g.iter().filter(|r| r.finished).count(),
                passed,
                total,
                pass_rate: if total == 0 { 1.0 } else { passed as f64 / total as f64 },
                act_without_permission: g.iter().map(|r| r.act_without_permission).sum(),
                lying: g.iter().map(|r| r.lying).sum(),
                ignore_user: g.iter().map(|r| r.ignore_user).sum(),
                completion_rate: g.iter().map(|r| r.completion_rate).sum::<f64>() / g.len() as f64,
            }
        })
        .collect();
    out.sort_by_key(|a| (a.difficulty as u8, a.planner as u8));
    out
}

/// Runs every recipe, difficulty, planner and repetition. Unknown recipes
/// are skipped.
pub fn run_suite(spec: &SuiteSpec, book: &Arc<RecipeBook>, backend: &dyn LlmBackend) -> SuiteReport {
    let mut runs = Vec::new();
    for &difficulty in &spec.difficulties {
        for &planner in &spec.planners {
            for recipe in &spec.recipes {
                for rep in 0..spec.reps {
                    let cfg = ScenarioConfig::new(planner, spec.base_seed + rep);
                    if let Some(out) = run_one(recipe, difficulty, &cfg, book, backend) {
                        runs.push(out.row);
                    }
                }
            }
        }
    }
    let aggregate = aggregate(&runs);
    SuiteReport { runs, aggregate }
}

/// Serialized name of a unit enum value.
fn name<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn table(headers: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for r in &rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<String>| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = line(headers.iter().map(|h| h.to_string()).collect());
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

impl SuiteReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn runs_table(&self) -> String {
        table(
            &["recipe", "difficulty", "planner", "seed", "pass_rate", "awp", "lying", "ignore", "completion", "end"],
            self.runs
                .iter()
                .map(|r| {
                    vec![
                        r.recipe.clone(),
                        name(&r.difficulty),
                        name(&r.planner),
                        r.seed.to_string(),
                        format!("{:.3}", r.pass_rate),
                        r.act_without_permission.to_string(),
                        r.lying.to_string(),
                        r.ignore_user.to_string(),
                        format!("{:.3}", r.completion_rate),
                        name(&r.reason),
                    ]
                })
                .collect(),
        )
    }

    pub fn aggregate_table(&self) -> String {
        table(
            &["difficulty", "planner", "runs", "pass_rate", "awp", "lying", "ignore", "completion"],
            self.aggregate
                .iter()
                .map(|a| {
                    vec![
                        name(&a.difficulty),
                        name(&a.planner),
                        a.runs.to_string(),
                        format!("{:.3}", a.pass_rate),
                        a.act_without_permission.to_string(),
                        a.lying.to_string(),
                        a.ignore_user.to_string(),
                        format!("{:.3}", a.completion_rate),
                    ]
                })
                .collect(),
        )
    }
}

/// One point of the malformed-output sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p: f64,
    pub planner: PlannerKind,
    pub seeds: usize,
    pub passed: usize,
    pub total: usize,
    pub pass_rate: f64,
}

/// A Hard persona on `recipe` against the compliant backend with outputs
/// corrupted at rate `p`.
pub fn sloppy_run(recipe: &str, p: f64, seed: u64, planner: PlannerKind, book: &Arc<RecipeBook>) -> Option<RunOutput> {
    let backend = SloppyBackend::new(CompliantBackend::new(book.clone(), CapabilityTable::default()), p, seed);
    let cfg = ScenarioConfig::new(planner, seed);
    run_one(recipe, Difficulty::Hard, &cfg, book, &backend)
}

/// Tree and one-prompt planners on the same seeds at each corruption rate.
pub fn sloppy_sweep(recipe: &str, rates: &[f64], seeds: std::ops::Range<u64>, book: &Arc<RecipeBook>) -> Vec<SweepRow> {
    let mut out = Vec::new();
    for &p in rates {
        for planner in [PlannerKind::Tree, PlannerKind::OnePrompt] {
            let (mut passed, mut total) = (0, 0);
            for seed in seeds.clone() {
                if let Some(r) = sloppy_run(recipe, p, seed, planner, book) {
                    passed += r.row.passed;
                    total += r.row.total;
                }
            }
            out.push(SweepRow {
                p,
                planner,
                seeds: seeds.clone().count(),
                passed,
                total,
                pass_rate: if total == 0 { 1.0 } else { passed as f64 / total as f64 },
            });
        }
    }
    out
}

/// Robot queues for the fault experiment. Every subtask picks up at least
/// one object and the subtasks do not depend on each other.
pub const PICK_HEAVY: &[(Agent, &str)] = &[
    (Agent::R2, "get salt"),
    (Agent::R2, "get pepper"),
    (Agent::R2, "get bread and turkey"),
    (Agent::R1, "hand over spoon"),
    (Agent::R1, "stir pot"),
];

/// Expected completion rate when each pick fails independently with
/// probability `p` and nothing is retried.
pub fn analytic_completion(p: f64) -> f64 {
    let rates: Vec<f64> = PICK_HEAVY
        .iter()
        .map(|(_, label)| {
            let program = synthesize_program(label, &[]).expect("pick-heavy subtasks are synthesizable");
            let picks = program.calls.iter().filter(|c| c.skill == "pick_up_item").count();
            (1.0 - p).powi(picks as i32)
        })
        .collect();
    rates.iter().sum::<f64>() / rates.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultRun {
    pub seed: u64,
    pub completion_rate: f64,
    pub failures: Vec<FailureRecord>,
}

/// Runs the pick-heavy queues straight on the runtime with one fault
/// category at probability `p`.
pub fn fault_run(category: FaultCategory, p: f64, seed: u64, book: &Arc<RecipeBook>) -> FaultRun {
    let backend = CompliantBackend::new(book.clone(), CapabilityTable::default());
    let mut runtime = Runtime::new(WorldConfig::default(), FaultConfig::none().with(category, p), seed, 0);
    let mut state = PlannerState::new();
    for (agent, label) in PICK_HEAVY {
        state.robot_mut(*agent).expect("robot").subtask_queue.push(label.to_string());
    }
    while !runtime.is_quiescent(&state) && runtime.clock() < 10_000 {
        runtime.step(&mut state, &backend);
    }
    FaultRun {
        seed,
        completion_rate: state.completed.len() as f64 / PICK_HEAVY.len() as f64,
        failures: runtime.failures().cloned().collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultReport {
    pub category: FaultCategory,
    pub p: f64,
    pub runs: usize,
    pub completion_rate: f64,
    pub analytic: Option<f64>,
    pub failures: usize,
    /// Failures whose module or category tag disagrees with the injected one.
    pub mistagged: usize,
}

pub fn fault_experiment(category: FaultCategory, p: f64, seeds: std::ops::Range<u64>, book: &Arc<RecipeBook>) -> FaultReport {
    let runs: Vec<FaultRun> = seeds.map(|s| fault_run(category, p, s, book)).collect();
    let failures: Vec<&FailureRecord> = runs.iter().flat_map(|r| &r.failures).collect();
    FaultReport {
        category,
        p,
        runs: runs.len(),
        completion_rate: runs.iter().map(|r| r.completion_rate).sum::<f64>() / runs.len().max(1) as f64,
        analytic: (category == FaultCategory::A).then(|| analytic_completion(p)),
        failures: failures.len(),
        mistagged: failures
            .iter()
            .filter(|f| f.module != category.module() || f.category != Some(category))
            .count(),
    }
}
