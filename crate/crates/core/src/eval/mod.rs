//! Evaluation harness: scripted personas, closed-loop scenarios, violation
//! checks, unit-test scoring and batch reports.

mod check;
mod persona;
mod scenario;
mod score;
mod suite;
mod transcript;

pub use check::{check_violations, count_by_category, CheckError, ViolationCategory, ViolationReport};
pub use persona::{Difficulty, Injection, Mode, Persona, PersonaError, PersonaScript, Turn};
pub use scenario::{run_scenario, ScenarioConfig};
pub use score::{score_unit_tests, Score, UnitTestResult};
pub use suite::{
    aggregate, analytic_completion, fault_experiment, fault_run, run_one, run_suite, sloppy_run, sloppy_sweep,
    summarize, AggregateRow, FaultReport, FaultRun, RunOutput, RunRow, SuiteReport, SuiteSpec, SweepRow,
    PICK_HEAVY, SUITE_RECIPES,
};
pub use transcript::{EndReason, Record, Transcript, TranscriptError};
