//! `sous`: run scenarios, evaluate planners, inspect recipe DAGs, replay
//! recorded runs and serve sessions over HTTP.

mod common;
mod dag;
mod eval;
mod replay;
mod run;
mod serve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sous_core::eval::Difficulty;
use sous_core::llm::BackendKind;
use sous_core::planner::PlannerKind;

#[derive(Parser)]
#[command(name = "sous", version, about = "Interactive multi-robot task planner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Inputs shared by the commands that run scenarios.
#[derive(Args, Clone)]
pub struct Common {
    /// Directory of recipe files; the built-in recipes when absent.
    #[arg(long)]
    pub recipes: Option<PathBuf>,
    #[arg(long, default_value = "scripted")]
    pub backend: BackendKind,
    /// Rule file for the scripted backend or recorded log for replay.
    #[arg(long)]
    pub backend_file: Option<PathBuf>,
    #[arg(long)]
    pub world: Option<PathBuf>,
    #[arg(long)]
    pub faults: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Run one persona against one recipe.
    Run(RunArgs),
    /// Run a suite of scenarios and write per-run and aggregate tables.
    Eval(EvalArgs),
    /// Print a recipe's subtasks, dependencies and initial frontier.
    Dag(DagArgs),
    /// Re-execute a recorded run, or check a transcript file.
    Replay(ReplayArgs),
    /// Serve sessions over HTTP and WebSocket.
    Serve(ServeArgs),
}

#[derive(Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Common,
    /// Recipe name, or path to a recipe file.
    #[arg(long)]
    pub recipe: String,
    /// Persona script; generated from --difficulty when absent.
    #[arg(long)]
    pub persona: Option<PathBuf>,
    #[arg(long, default_value = "easy")]
    pub difficulty: Difficulty,
    #[arg(long, default_value = "tree")]
    pub planner: PlannerKind,
    #[arg(long, default_value_t = 200)]
    pub turn_budget: usize,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// Suite manifest (TOML); the standard suite when absent.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Restrict the suite to one planner.
    #[arg(long)]
    pub planner: Option<PlannerKind>,
    /// Restrict the suite to one recipe.
    #[arg(long)]
    pub recipe: Option<String>,
    /// Malformed-output rates for a tree vs one-prompt sweep, e.g. 0.1,0.3.
    #[arg(long, value_delimiter = ',')]
    pub sweep: Vec<f64>,
    /// Seeds per sweep point.
    #[arg(long, default_value_t = 50)]
    pub sweep_seeds: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct DagArgs {
    /// Recipe file to parse.
    pub path: Option<PathBuf>,
    /// Built-in recipe name, instead of a file.
    #[arg(long, conflicts_with = "path")]
    pub recipe: Option<String>,
    /// Print the machine-readable dump instead of the summary.
    #[arg(long)]
    pub json: bool,
    /// Also write the dump to this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ReplayArgs {
    /// Run directory written by `sous run`, or a transcript file.
    pub path: PathBuf,
}

#[derive(Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    /// Session directory; sessions are kept in memory when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run::cmd_run(&a),
        Command::Eval(a) => eval::cmd_eval(&a),
        Command::Dag(a) => dag::cmd_dag(&a),
        Command::Replay(a) => replay::cmd_replay(&a),
        Command::Serve(a) => serve::cmd_serve(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
