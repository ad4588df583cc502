use std::sync::Arc;

use serde::Deserialize;
use sous_core::eval::{aggregate, run_one, sloppy_sweep, Difficulty, ScenarioConfig, SuiteReport, SUITE_RECIPES};
use sous_core::planner::PlannerKind;

use crate::common::{build_backend, create_out, io_err, load_book, load_faults, load_world, write, Failure};
use crate::run::jsonl;
use crate::EvalArgs;

/// Suite manifest. Missing keys take the standard suite's values.
#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Manifest {
    recipes: Vec<String>,
    difficulties: Vec<Difficulty>,
    planners: Vec<PlannerKind>,
    reps: u64,
    base_seed: Option<u64>,
    turn_budget: usize,
}

impl Default for Manifest {
    fn default() -> Self {
        Manifest {
            recipes: SUITE_RECIPES.iter().map(|s| s.to_string()).collect(),
            difficulties: vec![Difficulty::Easy, Difficulty::Hard],
            planners: vec![PlannerKind::Tree, PlannerKind::OnePrompt],
            reps: 3,
            base_seed: None,
            turn_budget: 200,
        }
    }
}

fn slug(s: &str) -> String {
    s.to_lowercase().replace(|c: char| !c.is_ascii_alphanumeric(), "_")
}

fn kebab<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

pub fn cmd_eval(a: &EvalArgs) -> Result<(), Failure> {
    let mut m = match &a.manifest {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(io_err(p))?;
            toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?
        }
        None => Manifest::default(),
    };
    if let Some(p) = a.planner {
        m.planners = vec![p];
    }
    if let Some(r) = &a.recipe {
        m.recipes = vec![r.clone()];
    }
    let book = load_book(a.common.recipes.as_deref())?;
    let mut recipes = Vec::new();
    for r in &m.recipes {
        let dag = book.get(r).ok_or_else(|| Failure::Config(format!("manifest names unknown recipe `{r}`")))?;
        recipes.push(dag.recipe_name().to_string());
    }
    if m.reps == 0 || recipes.is_empty() || m.planners.is_empty() || m.difficulties.is_empty() {
        return Err(Failure::Config("manifest selects no runs".into()));
    }
    let world = load_world(a.common.world.as_deref())?;
    let faults = load_faults(a.common.faults.as_deref())?;
    let book = Arc::new(book);
    create_out(&a.out)?;

    if !a.sweep.is_empty() {
        if a.sweep.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Failure::Config("sweep rates must lie in [0, 1]".into()));
        }
        let seed = a.common.seed;
        let rows = sloppy_sweep(&recipes[0], &a.sweep, seed..seed + a.sweep_seeds, &book);
        let mut text = format!("{:<6}{:<12}{:>8}{:>10}\n", "p", "planner", "seeds", "pass_rate");
        for r in &rows {
            text.push_str(&format!("{:<6}{:<12}{:>8}{:>10.3}\n", r.p, kebab(&r.planner), r.seeds, r.pass_rate));
        }
        write(a.out.join("sweep.json"), &serde_json::to_string_pretty(&rows).expect("serializes"))?;
        write(a.out.join("sweep.txt"), &text)?;
        print!("{text}");
        return Ok(());
    }

    let backend = build_backend(&a.common, &book)?;
    let base_seed = m.base_seed.unwrap_or(a.common.seed);
    let runs_dir = a.out.join("runs");
    create_out(&runs_dir)?;
    let mut rows = Vec::new();
    for &difficulty in &m.difficulties {
        for &planner in &m.planners {
            for recipe in &recipes {
                for rep in 0..m.reps {
                    let mut cfg = ScenarioConfig::new(planner, base_seed + rep);
                    cfg.turn_budget = m.turn_budget;
                    cfg.world = world.clone();
                    cfg.faults = faults.clone();
                    let out = run_one(recipe, difficulty, &cfg, &book, backend.as_ref()).expect("recipe resolved above");
                    let stem = format!("{}-{}-{}-{}", slug(recipe), kebab(&difficulty), kebab(&planner), cfg.seed);
                    write(runs_dir.join(format!("{stem}.jsonl")), &out.transcript.to_jsonl())?;
                    rows.push(out.row);
                }
            }
        }
    }
    let report = SuiteReport {
        aggregate: aggregate(&rows),
        runs: rows,
    };
    write(a.out.join("report.json"), &report.to_json())?;
    write(a.out.join("runs.jsonl"), &jsonl(&report.runs))?;
    write(a.out.join("runs.txt"), &report.runs_table())?;
    write(a.out.join("aggregate.txt"), &report.aggregate_table())?;
    print!("{}", report.aggregate_table());
    Ok(())
}
