//! Tree and single-prompt planners: one call per node, validation with
//! reruns, and conversion of node outputs into high-level actions.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use super::action::{Agent, AgentStatus, HighLevelAction};
use super::capability::CapabilityTable;
use super::observation::Observation;
use super::tree::{normalize_key, string_list, validate_output, NodeKind, NodeSpec, TreeConfig};
use crate::llm::{extract_json, CompletionRequest, Decoding, LlmBackend, LlmError};
use crate::prompts::{PromptError, PromptExample, PromptLibrary, PromptVars};
use crate::recipe::RecipeBook;

pub const ONE_PROMPT_NODE: &str = "All_Actions";

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("tree node `{0}` is missing")]
    MissingNode(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TickError {
    #[error("backend unavailable at node `{node}`: {source}")]
    BackendUnavailable { node: String, source: LlmError },
}

/// One model call made while evaluating a node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    pub request_hash: String,
    pub response: String,
    /// Why the response was rejected, if it was.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invalid: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub node: String,
    pub attempts: Vec<Attempt>,
    /// Chosen child for decision nodes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<String>,
    /// Accepted output with normalized keys.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<Map<String, Value>>,
    pub exhausted: bool,
}

impl NodeRecord {
    pub fn retry_count(&self) -> usize {
        self.attempts.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickResult {
    pub path: Vec<String>,
    pub records: Vec<NodeRecord>,
    pub actions: Vec<HighLevelAction>,
}

impl TickResult {
    pub fn exhausted_nodes(&self) -> Vec<&str> {
        self.records.iter().filter(|r| r.exhausted).map(|r| r.node.as_str()).collect()
    }
}

#[derive(Debug, Clone)]
struct NodePrompt {
    system: String,
    instructions: String,
    examples: Vec<PromptExample>,
}

fn prompt_vars(book: &RecipeBook, caps: &CapabilityTable) -> PromptVars {
    let mut vars = PromptVars::new();
    vars.insert("recipes".into(), book.names().join(", "));
    vars.insert("robot_capabilities".into(), caps.describe());
    vars
}

fn load_prompt(prompts: &PromptLibrary, name: &str, vars: &PromptVars) -> Result<NodePrompt, PlannerError> {
    let doc = prompts.get(name)?;
    let (system, instructions) = doc.render_instructions(vars);
    Ok(NodePrompt {
        system,
        instructions,
        examples: doc.examples.clone(),
    })
}

fn request(node: &str, prompt: &NodePrompt, obs_text: &str, decoding: Decoding) -> CompletionRequest {
    CompletionRequest {
        node_name: node.to_string(),
        system: prompt.system.clone(),
        instructions: prompt.instructions.clone(),
        examples: prompt.examples.clone(),
        rendered_observation: obs_text.to_string(),
        decoding,
    }
}

fn reply(out: &Map<String, Value>) -> Option<String> {
    out.get("reply")
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
}

fn added_items(new: &[String], old: &[String], obs: &Observation) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for item in new {
        let running = Agent::ROBOTS
            .into_iter()
            .any(|a| obs.robot(a).is_some_and(|r| r.current_subtask == *item));
        if !old.contains(item) && !running && !obs.completed_subtask_list.contains(item) && !out.contains(item) {
            out.push(item.clone());
        }
    }
    out
}

fn queue_key(agent: Agent) -> &'static str {
    match agent {
        Agent::R1 => "r1_subtask_queue",
        Agent::R2 => "r2_subtask_queue",
        Agent::User => "user_subtask_queue",
    }
}

/// Actions for a queue-editing output: insertions become assigns, new
/// completions become mark_complete, and other removals are logged and
/// dropped. Missing keys leave that queue unchanged.
fn modify_actions(out: &Map<String, Value>, obs: &Observation) -> Vec<HighLevelAction> {
    let mut actions = Vec::new();
    for agent in [Agent::R2, Agent::R1, Agent::User] {
        let Some(new) = out.get(queue_key(agent)).and_then(string_list) else { continue };
        let old = obs.queue(agent);
        let added = added_items(&new, old, obs);
        for removed in old.iter().filter(|o| !new.contains(o)) {
            tracing::info!(%agent, subtask = %removed, "queue removal without completion ignored");
        }
        if !added.is_empty() {
            actions.push(HighLevelAction::Assign { agent, subtasks: added });
        }
    }
    actions.extend(completion_actions(out, obs));
    actions
}

fn completion_actions(out: &Map<String, Value>, obs: &Observation) -> Vec<HighLevelAction> {
    let Some(done) = out.get("completed_subtask_list").and_then(string_list) else { return Vec::new() };
    let mut fresh: Vec<String> = Vec::new();
    for d in done {
        if !obs.completed_subtask_list.contains(&d) && !fresh.contains(&d) {
            fresh.push(d);
        }
    }
    if fresh.is_empty() {
        Vec::new()
    } else {
        vec![HighLevelAction::MarkComplete { subtasks: fresh }]
    }
}

fn interrupt_actions(out: &Map<String, Value>, obs: &Observation) -> Vec<HighLevelAction> {
    let mut actions = Vec::new();
    for agent in Agent::ROBOTS {
        let key = format!("{}_status", agent.as_str().to_lowercase());
        let wants_stop = out
            .get(&key)
            .and_then(Value::as_str)
            .and_then(AgentStatus::parse_word)
            .is_some_and(|s| s == AgentStatus::Interrupted);
        let running = obs.robot(agent).is_some_and(|r| r.status == AgentStatus::Running);
        if wants_stop && running {
            actions.push(HighLevelAction::Interrupt { agent });
        }
    }
    actions.extend(completion_actions(out, obs));
    actions
}

/// Maps an accepted action-node output to high-level actions.
pub fn node_actions(node: &str, out: &Map<String, Value>, obs: &Observation, book: &RecipeBook) -> Vec<HighLevelAction> {
    let mut actions = match node {
        "Set_Recipe" => out
            .get("recipe_name")
            .and_then(Value::as_str)
            .map(|n| {
                let name = book.get(n).map(|d| d.recipe_name().to_string()).unwrap_or_else(|| n.trim().to_string());
                vec![HighLevelAction::SetRecipe { name }]
            })
            .unwrap_or_default(),
        "Modify_Subtask" => modify_actions(out, obs),
        "Interrupt_Subtask" => interrupt_actions(out, obs),
        _ => Vec::new(),
    };
    if let Some(msg) = reply(out) {
        actions.push(HighLevelAction::say(msg));
    }
    if actions.is_empty() {
        actions.push(HighLevelAction::NoOp);
    }
    actions
}

/// Behavior-tree planner.
pub struct TreePlanner {
    tree: TreeConfig,
    prompts: BTreeMap<String, NodePrompt>,
    book: Arc<RecipeBook>,
    caps: CapabilityTable,
    decoding: Decoding,
}

impl TreePlanner {
    pub fn new(tree: TreeConfig, prompts: &PromptLibrary, book: Arc<RecipeBook>, caps: CapabilityTable) -> Result<Self, PlannerError> {
        let vars = prompt_vars(&book, &caps);
        let mut loaded = BTreeMap::new();
        for node in &tree.nodes {
            if node.kind != NodeKind::Noop {
                loaded.insert(node.name.clone(), load_prompt(prompts, node.prompt_name(), &vars)?);
            }
        }
        Ok(TreePlanner {
            tree,
            prompts: loaded,
            book,
            caps,
            decoding: Decoding::default(),
        })
    }

    pub fn builtin(book: Arc<RecipeBook>) -> Self {
        Self::new(TreeConfig::default(), &PromptLibrary::builtin(), book, CapabilityTable::default())
            .expect("builtin prompts cover the builtin tree")
    }

    pub fn tree(&self) -> &TreeConfig {
        &self.tree
    }

    pub fn book(&self) -> &RecipeBook {
        &self.book
    }

    pub fn capabilities(&self) -> &CapabilityTable {
        &self.caps
    }

    /// Queries `spec` until its output validates or the retry budget is
    /// spent. Transport-level failures abort immediately.
    pub fn run_node(&self, spec: &NodeSpec, obs_text: &str, backend: &dyn LlmBackend) -> Result<NodeRecord, TickError> {
        let mut record = NodeRecord {
            node: spec.name.clone(),
            attempts: Vec::new(),
            decision: None,
            output: None,
            exhausted: false,
        };
        let prompt = self.prompts.get(&spec.name).expect("prompt loaded for every model node");
        let req = request(&spec.name, prompt, obs_text, self.decoding);
        let hash = req.request_hash();
        for _ in 0..=self.tree.max_retries {
            let text = backend.complete(&req).map_err(|source| TickError::BackendUnavailable {
                node: spec.name.clone(),
                source,
            })?;
            let checked = extract_json(&text)
                .map_err(|e| e.to_string())
                .and_then(|raw| validate_output(spec, &raw, &self.book, &self.caps).map_err(|e| e.to_string()));
            match checked {
                Ok(out) => {
                    record.attempts.push(Attempt {
                        request_hash: hash,
                        response: text,
                        invalid: None,
                    });
                    if spec.kind == NodeKind::Decision {
                        record.decision = out.get("decision").and_then(Value::as_str).map(|d| d.trim().to_string());
                    }
                    record.output = Some(out);
                    return Ok(record);
                }
                Err(why) => {
                    tracing::debug!(node = %spec.name, %why, "node output rejected, rerunning");
                    record.attempts.push(Attempt {
                        request_hash: hash.clone(),
                        response: text,
                        invalid: Some(why),
                    });
                }
            }
        }
        tracing::warn!(node = %spec.name, "node exhausted its retries");
        record.exhausted = true;
        Ok(record)
    }

    /// Walks one root-to-leaf path and returns the leaf's actions.
    pub fn tick(&self, obs: &Observation, backend: &dyn LlmBackend) -> Result<TickResult, TickError> {
        let text = obs.render();
        let mut result = TickResult {
            path: Vec::new(),
            records: Vec::new(),
            actions: Vec::new(),
        };
        let mut current = self.tree.root.clone();
        for _ in 0..=self.tree.nodes.len() {
            let spec = self.tree.node(&current).expect("tree validated");
            result.path.push(current.clone());
            match spec.kind {
                NodeKind::Noop => {
                    result.actions.push(HighLevelAction::NoOp);
                    return Ok(result);
                }
                NodeKind::Decision => {
                    let record = self.run_node(spec, &text, backend)?;
                    let next = if record.exhausted {
                        spec.fallback.clone()
                    } else {
                        record.decision.clone()
                    };
                    result.records.push(record);
                    match next {
                        Some(n) => current = n,
                        None => {
                            result.actions.push(HighLevelAction::NoOp);
                            return Ok(result);
                        }
                    }
                }
                NodeKind::Action => {
                    let record = self.run_node(spec, &text, backend)?;
                    result.actions = match &record.output {
                        Some(out) if !record.exhausted => node_actions(&spec.name, out, obs, &self.book),
                        _ => vec![HighLevelAction::NoOp],
                    };
                    result.records.push(record);
                    return Ok(result);
                }
            }
        }
        result.actions.push(HighLevelAction::NoOp);
        Ok(result)
    }
}

/// Single-prompt baseline: one call, lenient parsing, no reruns.
pub struct OnePromptPlanner {
    prompt: NodePrompt,
    book: Arc<RecipeBook>,
    decoding: Decoding,
}

const ONE_PROMPT_DECISIONS: [&str; 7] = [
    "Set_Recipe",
    "Suggest_Alternative_Recipe",
    "Confirm_Subtask",
    "Modify_Subtask",
    "Interrupt_Subtask",
    "No_op",
    "Overall_Clarify",
];

impl OnePromptPlanner {
    pub fn new(prompts: &PromptLibrary, book: Arc<RecipeBook>, caps: &CapabilityTable) -> Result<Self, PlannerError> {
        let vars = prompt_vars(&book, caps);
        Ok(OnePromptPlanner {
            prompt: load_prompt(prompts, ONE_PROMPT_NODE, &vars)?,
            book,
            decoding: Decoding::default(),
        })
    }

    pub fn builtin(book: Arc<RecipeBook>) -> Self {
        Self::new(&PromptLibrary::builtin(), book, &CapabilityTable::default()).expect("builtin one-prompt document")
    }

    /// The node a response stands for: its `decision` when that is a known
    /// node, otherwise inferred from which keys are present.
    fn infer_node(out: &Map<String, Value>) -> &'static str {
        if let Some(d) = out.get("decision").and_then(Value::as_str) {
            if let Some(n) = ONE_PROMPT_DECISIONS.iter().find(|n| **n == d.trim()) {
                return n;
            }
        }
        if out.contains_key("recipe_name") {
            "Set_Recipe"
        } else if out.contains_key("r1_status") || out.contains_key("r2_status") {
            "Interrupt_Subtask"
        } else if out.keys().any(|k| k.ends_with("_subtask_queue")) {
            "Modify_Subtask"
        } else {
            "Overall_Clarify"
        }
    }

    pub fn tick(&self, obs: &Observation, backend: &dyn LlmBackend) -> Result<TickResult, TickError> {
        let req = request(ONE_PROMPT_NODE, &self.prompt, &obs.render(), self.decoding);
        let text = backend.complete(&req).map_err(|source| TickError::BackendUnavailable {
            node: ONE_PROMPT_NODE.to_string(),
            source,
        })?;
        let mut record = NodeRecord {
            node: ONE_PROMPT_NODE.to_string(),
            attempts: vec![Attempt {
                request_hash: req.request_hash(),
                response: text.clone(),
                invalid: None,
            }],
            decision: None,
            output: None,
            exhausted: false,
        };
        let actions = match extract_json(&text) {
            Err(e) => {
                tracing::warn!(error = %e, "unparseable single-prompt response, treating as no_op");
                record.attempts[0].invalid = Some(format!("unparseable response: {e}"));
                vec![HighLevelAction::NoOp]
            }
            Ok(raw) => {
                let out: Map<String, Value> = raw.iter().map(|(k, v)| (normalize_key(k), v.clone())).collect();
                let node = Self::infer_node(&out);
                record.decision = Some(node.to_string());
                let actions = if node == "No_op" {
                    vec![HighLevelAction::NoOp]
                } else {
                    node_actions(node, &out, obs, &self.book)
                };
                record.output = Some(out);
                actions
            }
        };
        Ok(TickResult {
            path: vec![ONE_PROMPT_NODE.to_string()],
            records: vec![record],
            actions,
        })
    }
}

/// Either planner behind one interface.
pub enum Planner {
    Tree(TreePlanner),
    OnePrompt(OnePromptPlanner),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlannerKind {
    Tree,
    OnePrompt,
}

impl std::str::FromStr for PlannerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().as_str() {
            "tree" => Ok(PlannerKind::Tree),
            "one-prompt" | "one_prompt" | "oneprompt" => Ok(PlannerKind::OnePrompt),
            other => Err(format!("unknown planner `{other}` (expected tree or one-prompt)")),
        }
    }
}

impl Planner {
    pub fn builtin(kind: PlannerKind, book: Arc<RecipeBook>) -> Self {
        match kind {
            PlannerKind::Tree => Planner::Tree(TreePlanner::builtin(book)),
            PlannerKind::OnePrompt => Planner::OnePrompt(OnePromptPlanner::builtin(book)),
        }
    }

    pub fn kind(&self) -> PlannerKind {
        match self {
            Planner::Tree(_) => PlannerKind::Tree,
            Planner::OnePrompt(_) => PlannerKind::OnePrompt,
        }
    }

    pub fn tick(&self, obs: &Observation, backend: &dyn LlmBackend) -> Result<TickResult, TickError> {
        match self {
            Planner::Tree(p) => p.tick(obs, backend),
            Planner::OnePrompt(p) => p.tick(obs, backend),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ScriptedBackend, ScriptedRule};
    use crate::planner::{AgentView, ChatEntry};

    fn planner() -> TreePlanner {
        TreePlanner::builtin(Arc::new(RecipeBook::builtin()))
    }

    fn scripted(rules: Vec<ScriptedRule>) -> ScriptedBackend {
        ScriptedBackend::new(rules)
    }

    #[test]
    fn set_recipe_path() {
        let b = scripted(vec![
            ScriptedRule::new("Decision", r#"{"reasoning": "r", "decision": "Recipe"}"#),
            ScriptedRule::new("Recipe", r#"{"reasoning": "r", "decision": "Set_Recipe"}"#).when_contains("user_input", "tossed salad"),
            ScriptedRule::new("Set_Recipe", r#"{"reasoning": "r", "recipe name": "tossed salad", "reply": "Let's make tossed salad!"}"#),
        ]);
        let obs = Observation {
            chat_history: vec![ChatEntry::user("Let's make tossed salad!")],
            user_input: "Let's make tossed salad!".into(),
            ..Observation::default()
        };
        let r = planner().tick(&obs, &b).unwrap();
        assert_eq!(r.path, vec!["Decision", "Recipe", "Set_Recipe"]);
        assert_eq!(
            r.actions,
            vec![
                HighLevelAction::SetRecipe {
                    name: "Tossed Salad".into()
                },
                HighLevelAction::say("Let's make tossed salad!")
            ]
        );
    }

    #[test]
    fn no_op_leaf_needs_no_call() {
        let b = scripted(vec![
            ScriptedRule::new("Decision", r#"{"reasoning": "r", "decision": "Execution"}"#),
            ScriptedRule::new("Execution", r#"{"reasoning": "r", "decision": "No_op"}"#),
        ]);
        let r = planner().tick(&Observation::default(), &b).unwrap();
        assert_eq!(r.path, vec!["Decision", "Execution", "No_op"]);
        assert_eq!(r.actions, vec![HighLevelAction::NoOp]);
    }

    #[test]
    fn rerun_after_non_json() {
        let b = scripted(vec![
            ScriptedRule::new("Decision", "Let me think about it.").consume_once(),
            ScriptedRule::new("Decision", r#"{"reasoning": "r", "decision": "Make_Coffee"}"#).consume_once(),
            ScriptedRule::new("Decision", r#"{"reasoning": "r", "decision": "Execution"}"#),
            ScriptedRule::new("Execution", r#"{"reasoning": "r", "decision": "No_op"}"#),
        ]);
        let r = planner().tick(&Observation::default(), &b).unwrap();
        assert_eq!(r.records[0].retry_count(), 2);
        assert_eq!(r.records[1].retry_count(), 0);
        assert_eq!(r.actions, vec![HighLevelAction::NoOp]);
    }

    #[test]
    fn exhausted_decision_falls_back_to_clarify() {
        let b = scripted(vec![
            ScriptedRule::new("Decision", "nope"),
            ScriptedRule::new("Overall_Clarify", r#"{"reasoning": "r", "reply": "Could you say that again?"}"#),
        ]);
        let r = planner().tick(&Observation::default(), &b).unwrap();
        assert_eq!(r.path, vec!["Decision", "Overall_Clarify"]);
        assert_eq!(r.records[0].attempts.len(), 4);
        assert!(r.records[0].exhausted);
        assert_eq!(r.actions, vec![HighLevelAction::say("Could you say that again?")]);
    }

    #[test]
    fn exhausted_action_is_no_op() {
        let b = scripted(vec![ScriptedRule::new("Decision", r#"{"decision": "Overall_Clarify"}"#), ScriptedRule::new("*", "{}")]);
        let r = planner().tick(&Observation::default(), &b).unwrap();
        assert_eq!(r.exhausted_nodes(), vec!["Overall_Clarify"]);
        assert_eq!(r.actions, vec![HighLevelAction::NoOp]);
    }

    #[test]
    fn transport_failure_aborts_tick() {
        let b = scripted(vec![]);
        assert!(matches!(
            planner().tick(&Observation::default(), &b),
            Err(TickError::BackendUnavailable { .. })
        ));
    }

    #[test]
    fn modify_output_is_diffed_into_assigns() {
        let obs = Observation {
            recipe_name: "Caesar Salad".into(),
            available_subtasks: vec!["get pepper".into(), "chop carrots".into()],
            r1: AgentView {
                subtask_queue: vec!["stir food".into()],
                ..AgentView::default()
            },
            ..Observation::default()
        };
        let out: Map<String, Value> = serde_json::from_str(
            r#"{"r2_subtask_queue": ["get pepper"], "r1_subtask_queue": ["stir food"], "user_subtask_queue": ["chop carrots"], "completed_subtask_list": [], "reply": "ok"}"#,
        )
        .unwrap();
        let acts = node_actions("Modify_Subtask", &out, &obs, &RecipeBook::builtin());
        assert_eq!(
            acts,
            vec![
                HighLevelAction::Assign {
                    agent: Agent::R2,
                    subtasks: vec!["get pepper".into()]
                },
                HighLevelAction::Assign {
                    agent: Agent::User,
                    subtasks: vec!["chop carrots".into()]
                },
                HighLevelAction::say("ok"),
            ]
        );
    }

    #[test]
    fn interrupt_output_stops_running_robot_only() {
        let obs = Observation {
            r2: AgentView {
                current_subtask: "get broccoli".into(),
                status: AgentStatus::Running,
                ..AgentView::default()
            },
            ..Observation::default()
        };
        let out: Map<String, Value> = serde_json::from_str(
            r#"{"r2_status": "Killed", "r1_status": "Killed", "completed_subtask_list": ["get broccoli"], "reply": "R2 will no longer get broccoli"}"#,
        )
        .unwrap();
        let acts = node_actions("Interrupt_Subtask", &out, &obs, &RecipeBook::builtin());
        assert_eq!(acts[0], HighLevelAction::Interrupt { agent: Agent::R2 });
        assert_eq!(
            acts[1],
            HighLevelAction::MarkComplete {
                subtasks: vec!["get broccoli".into()]
            }
        );
        assert_eq!(acts.len(), 3);
    }

    #[test]
    fn one_prompt_is_lenient_and_never_reruns() {
        let p = OnePromptPlanner::builtin(Arc::new(RecipeBook::builtin()));
        let b = scripted(vec![ScriptedRule::new(
            ONE_PROMPT_NODE,
            r#"{"reasoning": "r", "recipe_name": "Bibimbap", "reply": "Let's make bibimbap!"}"#,
        )]);
        let r = p.tick(&Observation::default(), &b).unwrap();
        assert_eq!(r.actions[0], HighLevelAction::SetRecipe { name: "Bibimbap".into() });
        let bad = scripted(vec![ScriptedRule::new(ONE_PROMPT_NODE, "sure thing")]);
        let r = p.tick(&Observation::default(), &bad).unwrap();
        assert_eq!(r.actions, vec![HighLevelAction::NoOp]);
        assert_eq!(r.records[0].attempts.len(), 1);
        let noop = scripted(vec![ScriptedRule::new(ONE_PROMPT_NODE, r#"{"reasoning": "nothing to do"}"#)]);
        assert_eq!(p.tick(&Observation::default(), &noop).unwrap().actions, vec![HighLevelAction::NoOp]);
    }
}
