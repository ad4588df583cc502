use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sous_core::eval::{
    run_scenario, summarize, Difficulty, PersonaScript, RunRow, ScenarioConfig, Score, Transcript, ViolationReport,
};
use sous_core::llm::{Gateway, LlmBackend};
use sous_core::planner::{CapabilityTable, PlannerKind};
use sous_core::recipe::RecipeBook;

use crate::common::{
    build_backend, config_err, create_out, load_book, load_faults, load_world, resolve_recipe, write, Failure,
};
use crate::RunArgs;

pub const RUN_FILE: &str = "run.json";
pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const LLM_FILE: &str = "llm.jsonl";
pub const REPORT_FILE: &str = "report.json";

/// Everything needed to re-execute a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub recipe: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipes: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipe_file: Option<PathBuf>,
    pub persona: PersonaScript,
    pub difficulty: Difficulty,
    pub planner: PlannerKind,
    pub seed: u64,
    pub turn_budget: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub faults: Option<PathBuf>,
}

#[derive(Serialize)]
pub struct RunReport {
    pub row: RunRow,
    pub score: Score,
    pub violations: Vec<ViolationReport>,
}

impl RunManifest {
    pub fn book(&self) -> Result<RecipeBook, Failure> {
        let mut book = load_book(self.recipes.as_deref())?;
        if let Some(f) = &self.recipe_file {
            resolve_recipe(&mut book, &f.display().to_string())?;
        }
        Ok(book)
    }

    pub fn scenario(&self) -> Result<ScenarioConfig, Failure> {
        let mut cfg = ScenarioConfig::new(self.planner, self.seed);
        cfg.turn_budget = self.turn_budget;
        cfg.world = load_world(self.world.as_deref())?;
        cfg.faults = load_faults(self.faults.as_deref())?;
        Ok(cfg)
    }

    /// Runs the scenario, returning the transcript and the recorded model
    /// calls.
    pub fn execute(
        &self,
        book: Arc<RecipeBook>,
        backend: Arc<dyn LlmBackend>,
    ) -> Result<(Transcript, Gateway), Failure> {
        let cfg = self.scenario()?;
        let gateway = Gateway::new(backend);
        let t = run_scenario(&self.persona, &cfg, book, &gateway);
        Ok((t, gateway))
    }

    pub fn report(&self, t: &Transcript) -> RunReport {
        let (row, score, violations) = summarize(
            t,
            &self.persona,
            self.difficulty,
            self.planner,
            self.seed,
            &CapabilityTable::default(),
        );
        RunReport { row, score, violations }
    }
}

/// Asset paths are stored absolute so a run directory can be replayed
/// from anywhere.
fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

pub fn jsonl<T: Serialize>(items: &[T]) -> String {
    items
        .iter()
        .map(|e| serde_json::to_string(e).expect("serializes") + "\n")
        .collect()
}

pub fn cmd_run(a: &RunArgs) -> Result<(), Failure> {
    let mut book = load_book(a.common.recipes.as_deref())?;
    let recipe = resolve_recipe(&mut book, &a.recipe)?;
    let recipe_file = Path::new(&a.recipe).is_file().then(|| absolute(Path::new(&a.recipe)));
    let persona = match &a.persona {
        Some(p) => {
            if !p.exists() {
                return Err(Failure::Config(format!("{}: persona file not found", p.display())));
            }
            let mut s = PersonaScript::load(p).map_err(config_err)?;
            s.recipe = recipe.clone();
            s
        }
        None => {
            let dag = book.get(&recipe).expect("resolved recipe is in the book");
            PersonaScript::for_difficulty(a.difficulty, dag, a.common.seed)
        }
    };
    let manifest = RunManifest {
        recipe,
        recipes: a.common.recipes.as_deref().map(absolute),
        recipe_file,
        persona,
        difficulty: a.difficulty,
        planner: a.planner,
        seed: a.common.seed,
        turn_budget: a.turn_budget,
        world: a.common.world.as_deref().map(absolute),
        faults: a.common.faults.as_deref().map(absolute),
    };
    manifest.scenario()?;
    let book = Arc::new(book);
    let backend = build_backend(&a.common, &book)?;
    create_out(&a.out)?;
    let (t, gateway) = manifest.execute(book, backend)?;
    let report = manifest.report(&t);

    write(a.out.join(RUN_FILE), &serde_json::to_string_pretty(&manifest).expect("serializes"))?;
    write(a.out.join(TRANSCRIPT_FILE), &t.to_jsonl())?;
    write(a.out.join(LLM_FILE), &jsonl(&gateway.records()))?;
    write(a.out.join(REPORT_FILE), &serde_json::to_string_pretty(&report).expect("serializes"))?;

    let r = &report.row;
    println!(
        "{}: {:?} after {} turns, {} ticks; unit tests {}/{}; violations awp={} lying={} ignore={}; completion {:.3}",
        r.recipe,
        r.reason,
        r.turns,
        r.ticks,
        r.passed,
        r.total,
        r.act_without_permission,
        r.lying,
        r.ignore_user,
        r.completion_rate
    );
    if r.finished {
        Ok(())
    } else {
        Err(Failure::Scenario(format!(
            "recipe not finished ({:?}); see {}",
            r.reason,
            a.out.join(REPORT_FILE).display()
        )))
    }
}
