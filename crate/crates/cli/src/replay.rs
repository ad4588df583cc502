use std::path::Path;
use std::sync::Arc;

use sous_core::eval::{check_violations, Record, Transcript};
use sous_core::llm::{LlmBackend, RecordEntry, ReplayBackend};

use crate::common::{config_err, io_err, Failure};
use crate::run::{RunManifest, LLM_FILE, RUN_FILE, TRANSCRIPT_FILE};
use crate::ReplayArgs;

pub fn cmd_replay(a: &ReplayArgs) -> Result<(), Failure> {
    if a.path.is_dir() {
        replay_run(&a.path)
    } else {
        check_transcript(&a.path)
    }
}

/// Re-executes a run against its recorded model calls and compares the
/// new transcript with the stored one byte for byte.
fn replay_run(dir: &Path) -> Result<(), Failure> {
    let run_path = dir.join(RUN_FILE);
    let text = std::fs::read_to_string(&run_path).map_err(io_err(&run_path))?;
    let manifest: RunManifest = serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", run_path.display())))?;
    let llm_path = dir.join(LLM_FILE);
    let entries = RecordEntry::read_jsonl(&llm_path).map_err(io_err(&llm_path))?;
    let t_path = dir.join(TRANSCRIPT_FILE);
    let stored = std::fs::read_to_string(&t_path).map_err(io_err(&t_path))?;

    let book = Arc::new(manifest.book()?);
    let backend: Arc<dyn LlmBackend> = Arc::new(ReplayBackend::new(entries));
    let (t, _) = manifest.execute(book, backend)?;
    let fresh = t.to_jsonl();
    if fresh == stored {
        println!("replay identical: {} records", t.records.len());
        return Ok(());
    }
    let line = fresh
        .lines()
        .zip(stored.lines())
        .position(|(x, y)| x != y)
        .unwrap_or_else(|| fresh.lines().count().min(stored.lines().count()));
    Err(Failure::Scenario(format!("replay diverges from {} at line {}", t_path.display(), line + 1)))
}

/// Summarizes a transcript and re-runs the violation checker on it.
fn check_transcript(path: &Path) -> Result<(), Failure> {
    if !path.exists() {
        return Err(Failure::Config(format!("{}: file not found", path.display())));
    }
    let t = Transcript::load(path).map_err(config_err)?;
    for r in &t.records {
        match r {
            Record::Header { recipe, planner, seed, persona } => {
                println!("recipe {recipe}, planner {planner:?}, seed {seed}, persona {persona}")
            }
            Record::UserTurn { turn, text, .. } => println!("[turn {turn}] user: {text}"),
            Record::Tick { tick_id, actions, .. } => {
                let kinds: Vec<&str> = actions.iter().map(|a| a.kind()).collect();
                println!("[tick {tick_id}] {}", kinds.join(" "));
            }
            Record::TickError { tick_id, error } => println!("[tick {tick_id}] error: {error}"),
            Record::Runtime { .. } => {}
            Record::End { reason, recipe_done, recipe_nodes, .. } => {
                println!("end: {reason:?}, {recipe_done}/{recipe_nodes} subtasks done")
            }
        }
    }
    let violations = check_violations(&t).map_err(|e| Failure::Scenario(e.to_string()))?;
    for v in &violations {
        let at = v.turn.map(|t| format!(" at turn {t}")).unwrap_or_default();
        println!("violation {:?}{at}: {}", v.category, v.detail);
    }
    println!("{} violations", violations.len());
    Ok(())
}
