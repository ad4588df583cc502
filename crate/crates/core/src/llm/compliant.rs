//! Deterministic programmatic stand-in for a well-behaved model. It reads
//! the rendered observation back, follows each node's instructions for the
//! controlled chat language, and answers in the node's JSON format.

use std::sync::Arc;

use serde_json::{json, Map, Value};

use super::{CompletionRequest, LlmBackend, LlmError, CODEGEN_NODE};
use crate::phrases::{
    extract_proposals, normalize_label, parse_user_text, planner_claim, planner_decline, planner_done_ack,
    planner_propose, planner_stopped, resolve_label, Intent,
};
use crate::planner::{Agent, AgentStatus, CapabilityTable, Observation, Speaker, ONE_PROMPT_NODE};
use crate::recipe::RecipeBook;
use crate::skills::{parse_codegen_query, synthesize_program};

pub struct CompliantBackend {
    book: Arc<RecipeBook>,
    caps: CapabilityTable,
    refuse_reassign: bool,
}

/// What the planner should do with the current observation.
#[derive(Debug, Clone, PartialEq)]
enum Plan {
    SetRecipe(String),
    Suggest(String),
    Clarify,
    Confirm(Vec<(Agent, String)>),
    Modify(Map<String, Value>),
    Interrupt(Map<String, Value>),
    NoOp,
}

impl Plan {
    fn node(&self) -> &'static str {
        match self {
            Plan::SetRecipe(_) => "Set_Recipe",
            Plan::Suggest(_) => "Suggest_Alternative_Recipe",
            Plan::Clarify => "Overall_Clarify",
            Plan::Confirm(_) => "Confirm_Subtask",
            Plan::Modify(_) => "Modify_Subtask",
            Plan::Interrupt(_) => "Interrupt_Subtask",
            Plan::NoOp => "No_op",
        }
    }

    fn is_recipe_branch(&self) -> bool {
        matches!(self, Plan::SetRecipe(_) | Plan::Suggest(_) | Plan::Clarify)
    }
}

fn decision(reason: &str, d: &str) -> String {
    json!({"reasoning": reason, "decision": d}).to_string()
}

/// Planner messages after the last user turn.
fn since_last_user(obs: &Observation) -> Vec<&str> {
    let start = obs
        .chat_history
        .iter()
        .rposition(|e| e.speaker == Speaker::User)
        .map(|i| i + 1)
        .unwrap_or(0);
    obs.chat_history[start..]
        .iter()
        .filter(|e| e.speaker == Speaker::Planner)
        .map(|e| e.text.as_str())
        .collect()
}

/// Planner messages between the previous user turn and the latest one.
fn before_latest_user(obs: &Observation) -> Vec<&str> {
    let users: Vec<usize> = obs
        .chat_history
        .iter()
        .enumerate()
        .filter(|(_, e)| e.speaker == Speaker::User)
        .map(|(i, _)| i)
        .collect();
    let Some(&last) = users.last() else { return Vec::new() };
    let start = users.len().checked_sub(2).map(|i| users[i] + 1).unwrap_or(0);
    obs.chat_history[start..last]
        .iter()
        .filter(|e| e.speaker == Speaker::Planner)
        .map(|e| e.text.as_str())
        .collect()
}

fn sentence_case(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

struct Queues {
    r2: Vec<String>,
    r1: Vec<String>,
    user: Vec<String>,
    completed: Vec<String>,
}

impl Queues {
    fn from(obs: &Observation) -> Self {
        Queues {
            r2: obs.r2.subtask_queue.clone(),
            r1: obs.r1.subtask_queue.clone(),
            user: obs.user_subtask_queue.clone(),
            completed: obs.completed_subtask_list.clone(),
        }
    }

    fn get_mut(&mut self, agent: Agent) -> &mut Vec<String> {
        match agent {
            Agent::R1 => &mut self.r1,
            Agent::R2 => &mut self.r2,
            Agent::User => &mut self.user,
        }
    }

    fn remove_everywhere(&mut self, label: &str) {
        for q in [&mut self.r1, &mut self.r2, &mut self.user] {
            q.retain(|l| l != label);
        }
    }

    fn assign(&mut self, agent: Agent, label: &str) {
        self.remove_everywhere(label);
        self.get_mut(agent).push(label.to_string());
    }

    fn into_output(self, reply: String) -> Map<String, Value> {
        let mut m = Map::new();
        m.insert("reasoning".into(), json!("Updating the queues to follow the user's instruction."));
        m.insert("updated R2_subtask_queue".into(), json!(self.r2));
        m.insert("updated R1_subtask_queue".into(), json!(self.r1));
        m.insert("updated user_subtask_queue".into(), json!(self.user));
        m.insert("updated completed_subtask_list".into(), json!(self.completed));
        m.insert("reply".into(), json!(reply));
        m
    }
}

impl CompliantBackend {
    pub fn new(book: Arc<RecipeBook>, caps: CapabilityTable) -> Self {
        CompliantBackend {
            book,
            caps,
            refuse_reassign: false,
        }
    }

    /// Variant that turns down every request to move a subtask.
    pub fn refusing_reassignments(mut self) -> Self {
        self.refuse_reassign = true;
        self
    }

    fn running(obs: &Observation, agent: Agent) -> bool {
        obs.robot(agent).is_some_and(|r| r.status == AgentStatus::Running)
    }

    fn alternatives(&self, words: &str) -> Vec<String> {
        let wanted: Vec<String> = normalize_label(words).split(' ').map(str::to_string).filter(|w| w.len() > 2).collect();
        let mut hits: Vec<String> = self
            .book
            .iter()
            .filter(|d| {
                let name = d.recipe_name().to_lowercase();
                wanted.iter().any(|w| {
                    name.contains(w.as_str()) || d.nodes().iter().any(|n| n.label.to_lowercase().contains(w.as_str()))
                })
            })
            .map(|d| d.recipe_name().to_string())
            .collect();
        if hits.is_empty() {
            hits = self.book.names();
        }
        hits.truncate(3);
        hits
    }

    fn recipe_plan(&self, obs: &Observation, intent: &Intent) -> Plan {
        let named = match intent {
            Intent::ProposeRecipe { name } => Some(name),
            Intent::ProposeNonexistent { dish } => Some(dish),
            _ => None,
        };
        if let Some(name) = named {
            if let Some(dag) = self.book.get(name) {
                return Plan::SetRecipe(dag.recipe_name().to_string());
            }
            let alts = self.alternatives(name);
            return Plan::Suggest(format!(
                "I don't have {name} in my recipe list. How about {}?",
                alts.join(" or ")
            ));
        }
        if let Intent::ProposeVague { hint } = intent {
            let alts = self.alternatives(hint);
            return Plan::Suggest(format!("A few recipes use {hint}. Do you want to make {}?", alts.join(" or ")));
        }
        let _ = obs;
        Plan::Clarify
    }

    fn confirm_targets(&self, obs: &Observation) -> Vec<(Agent, String)> {
        let proposed: Vec<(Agent, String)> = since_last_user(obs).into_iter().flat_map(extract_proposals).collect();
        let mut picked: Vec<(Agent, String)> = Vec::new();
        for label in &obs.available_subtasks {
            let agent = self.caps.capable_robot(label).unwrap_or(Agent::User);
            let busy = picked.iter().chain(proposed.iter()).any(|(a, _)| *a == agent);
            if !busy {
                picked.push((agent, label.clone()));
            }
        }
        picked
    }

    fn interrupt_output(&self, obs: &Observation, agent: Agent, done_by_user: bool) -> Map<String, Value> {
        let mut completed = obs.completed_subtask_list.clone();
        let mut m = Map::new();
        let mut reply = String::new();
        for robot in Agent::ROBOTS {
            let view = obs.robot(robot).expect("robot");
            let mut status = view.status;
            if robot == agent && view.status == AgentStatus::Running {
                status = AgentStatus::Interrupted;
                completed.push(view.current_subtask.clone());
                reply = planner_stopped(robot, &view.current_subtask);
                if done_by_user {
                    reply = format!("{reply} {}", planner_done_ack(&view.current_subtask));
                }
            }
            m.insert(format!("{robot}_status"), json!(status.prompt_word()));
        }
        if reply.is_empty() {
            reply = format!("{agent} is not working on anything right now.");
        }
        m.insert("reasoning".into(), json!("The user asked to stop a running robot."));
        m.insert("completed_subtask_list".into(), json!(completed));
        m.insert("reply".into(), json!(reply));
        m
    }

    fn modify_output(&self, obs: &Observation, intent: &Intent) -> Map<String, Value> {
        let mut q = Queues::from(obs);
        let mut replies: Vec<String> = Vec::new();
        let pending: Vec<String> = obs
            .available_subtasks
            .iter()
            .chain(obs.r2.subtask_queue.iter())
            .chain(obs.r1.subtask_queue.iter())
            .chain(obs.user_subtask_queue.iter())
            .cloned()
            .collect();
        match intent {
            Intent::Approve => {
                for (agent, phrase) in before_latest_user(obs).into_iter().flat_map(extract_proposals) {
                    let Some(label) = resolve_label(&phrase, obs.available_subtasks.iter()) else { continue };
                    if !self.caps.can(agent, &label) || q.get_mut(agent).contains(&label) {
                        continue;
                    }
                    q.assign(agent, &label);
                    replies.push(planner_claim(agent, &label));
                }
                if replies.is_empty() {
                    replies.push("Okay.".into());
                }
            }
            Intent::Reject => replies.push("Okay, I will hold off on that.".into()),
            Intent::ReportDone { subtask } => {
                match resolve_label(subtask, pending.iter()) {
                    Some(label) => {
                        q.remove_everywhere(&label);
                        if !q.completed.contains(&label) {
                            q.completed.push(label.clone());
                        }
                        replies.push(planner_done_ack(&label));
                    }
                    None => replies.push(format!("Thanks for letting me know about {subtask}.")),
                }
            }
            Intent::Reassign { subtask, agent } => {
                let label = resolve_label(subtask, pending.iter()).unwrap_or_else(|| subtask.clone());
                if self.refuse_reassign {
                    replies.push(format!("Sorry, you cannot take over {label}; I will keep the current plan."));
                } else if self.caps.can(*agent, &label) {
                    q.assign(*agent, &label);
                    replies.push(planner_claim(*agent, &label));
                } else {
                    replies.push(planner_decline(*agent, &label));
                }
            }
            Intent::AddSubtask { subtask, agent } => {
                let label = resolve_label(subtask, pending.iter()).unwrap_or_else(|| subtask.clone());
                if self.caps.can(*agent, &label) {
                    q.assign(*agent, &label);
                    replies.push(planner_claim(*agent, &label));
                } else {
                    let mut r = planner_decline(*agent, &label);
                    if let Some(other) = self.caps.capable_robot(&label) {
                        r = format!("{r} {}", planner_propose(other, &label));
                    }
                    replies.push(r);
                }
            }
            _ => replies.push("Okay.".into()),
        }
        let reply = replies.iter().map(|r| sentence_case(r)).collect::<Vec<_>>().join(" ");
        q.into_output(reply)
    }

    fn plan(&self, obs: &Observation) -> Plan {
        let input = obs.user_input.trim();
        let intent = if input.is_empty() { Intent::Smalltalk } else { parse_user_text(input) };
        let recipe_talk = matches!(
            intent,
            Intent::ProposeRecipe { .. } | Intent::ProposeVague { .. } | Intent::ProposeNonexistent { .. }
        );
        if !input.is_empty() && (obs.recipe_name.is_empty() || recipe_talk) {
            return self.recipe_plan(obs, &intent);
        }
        if obs.recipe_name.is_empty() {
            return Plan::NoOp;
        }
        if let Intent::InterruptRequest { agent } = intent {
            return Plan::Interrupt(self.interrupt_output(obs, agent, false));
        }
        if let Intent::ReportDone { subtask } = &intent {
            for robot in Agent::ROBOTS {
                let current = &obs.robot(robot).expect("robot").current_subtask;
                if Self::running(obs, robot)
                    && resolve_label(subtask, std::iter::once(current)).is_some()
                {
                    return Plan::Interrupt(self.interrupt_output(obs, robot, true));
                }
            }
        }
        match intent {
            Intent::Approve
            | Intent::Reject
            | Intent::ReportDone { .. }
            | Intent::Reassign { .. }
            | Intent::AddSubtask { .. } => return Plan::Modify(self.modify_output(obs, &intent)),
            _ => {}
        }
        if intent == Intent::Smalltalk {
            let targets = self.confirm_targets(obs);
            if !targets.is_empty() {
                return Plan::Confirm(targets);
            }
        }
        Plan::NoOp
    }

    fn confirm_reply(targets: &[(Agent, String)]) -> String {
        targets
            .iter()
            .map(|(a, l)| planner_propose(*a, l))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn clarify_reply(&self) -> String {
        format!("Which recipe would you like to make? I know {}.", self.book.names().join(", "))
    }

    /// Leaf payload for `plan`, with the given key style.
    fn leaf(&self, plan: &Plan, one_prompt: bool) -> Map<String, Value> {
        let mut m = match plan {
            Plan::SetRecipe(name) => {
                let key = if one_prompt { "recipe_name" } else { "recipe name" };
                let mut m = Map::new();
                m.insert(key.into(), json!(name));
                m.insert("reply".into(), json!(format!("Let's make {name}!")));
                m
            }
            Plan::Suggest(reply) => Map::from_iter([("reply".to_string(), json!(reply))]),
            Plan::Clarify => Map::from_iter([("reply".to_string(), json!(self.clarify_reply()))]),
            Plan::Confirm(targets) => Map::from_iter([("reply".to_string(), json!(Self::confirm_reply(targets)))]),
            Plan::Modify(m) | Plan::Interrupt(m) => m.clone(),
            Plan::NoOp => Map::new(),
        };
        if !m.contains_key("reasoning") {
            m.insert("reasoning".into(), json!(format!("Following the {} guidelines.", plan.node())));
        }
        if one_prompt {
            m = m
                .into_iter()
                .map(|(k, v)| (k.strip_prefix("updated ").map(str::to_string).unwrap_or(k), v))
                .collect();
            m.insert("decision".into(), json!(plan.node()));
        }
        m
    }

    fn answer(&self, node: &str, obs: &Observation) -> Option<String> {
        let plan = self.plan(obs);
        let out = match node {
            "Decision" => decision(
                "Choosing the branch that fits the observation.",
                if plan.is_recipe_branch() { "Recipe" } else { "Execution" },
            ),
            "Recipe" => decision(
                "Choosing how to settle the recipe.",
                match plan {
                    Plan::SetRecipe(_) => "Set_Recipe",
                    Plan::Suggest(_) => "Suggest_Alternative_Recipe",
                    _ => "Clarify_Recipe",
                },
            ),
            "Execution" => decision(
                "Choosing how to proceed with the recipe.",
                match plan {
                    Plan::Confirm(_) => "Confirm_Subtask",
                    Plan::Modify(_) => "Modify_Subtask",
                    Plan::Interrupt(_) => "Interrupt_Subtask",
                    _ => "No_op",
                },
            ),
            "Set_Recipe" | "Suggest_Alternative_Recipe" | "Confirm_Subtask" | "Modify_Subtask" | "Interrupt_Subtask" => {
                if plan.node() != node {
                    return None;
                }
                Value::Object(self.leaf(&plan, false)).to_string()
            }
            "Overall_Clarify" | "Clarify_Recipe" => json!({
                "reasoning": "The request is unclear.",
                "reply": self.clarify_reply(),
            })
            .to_string(),
            ONE_PROMPT_NODE => Value::Object(self.leaf(&plan, true)).to_string(),
            _ => return None,
        };
        Some(out)
    }
}

impl LlmBackend for CompliantBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        if request.node_name == CODEGEN_NODE {
            let query = parse_codegen_query(&request.rendered_observation).ok_or_else(|| LlmError::NoMatchingRule {
                node: request.node_name.clone(),
            })?;
            return Ok(match synthesize_program(&query.subtask, &query.completed) {
                Some(p) => p.serialize(),
                None => format!("# no skill sequence covers `{}`\n", query.subtask),
            });
        }
        let obs = Observation::parse(&request.rendered_observation).map_err(|_| LlmError::NoMatchingRule {
            node: request.node_name.clone(),
        })?;
        self.answer(&request.node_name, &obs).ok_or_else(|| LlmError::NoMatchingRule {
            node: request.node_name.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{AgentView, ChatEntry, HighLevelAction, OnePromptPlanner, TreePlanner};

    fn backend() -> CompliantBackend {
        CompliantBackend::new(Arc::new(RecipeBook::builtin()), CapabilityTable::default())
    }

    fn tree() -> TreePlanner {
        TreePlanner::builtin(Arc::new(RecipeBook::builtin()))
    }

    fn with_input(mut obs: Observation, text: &str) -> Observation {
        obs.chat_history.push(ChatEntry::user(text));
        obs.user_input = text.into();
        obs
    }

    #[test]
    fn sets_named_recipe() {
        let obs = with_input(Observation::default(), "Let's make tossed salad!");
        let r = tree().tick(&obs, &backend()).unwrap();
        assert_eq!(r.path, vec!["Decision", "Recipe", "Set_Recipe"]);
        assert_eq!(r.actions[0], HighLevelAction::SetRecipe { name: "Tossed Salad".into() });
    }

    #[test]
    fn suggests_for_vague_and_unknown() {
        for text in ["I want something with lettuce.", "Can we make lasagna?"] {
            let obs = with_input(Observation::default(), text);
            let r = tree().tick(&obs, &backend()).unwrap();
            assert_eq!(r.path, vec!["Decision", "Recipe", "Suggest_Alternative_Recipe"], "{text}");
            assert!(matches!(&r.actions[..], [HighLevelAction::Say { .. }]));
        }
    }

    #[test]
    fn proposes_then_assigns_on_approval() {
        let mut obs = Observation {
            recipe_name: "Caesar Salad".into(),
            available_subtasks: vec!["Prepare lettuce".into(), "Get pepper".into(), "Get ranch sauce".into()],
            ..Observation::default()
        };
        let r = tree().tick(&obs, &backend()).unwrap();
        assert_eq!(r.path, vec!["Decision", "Execution", "Confirm_Subtask"]);
        let HighLevelAction::Say { msg } = &r.actions[0] else { panic!() };
        assert_eq!(
            msg,
            "None of the robots can Prepare lettuce. Can you do it and let me know when you finish? Shall R2 Get pepper for you?"
        );
        obs.chat_history.push(ChatEntry::planner(msg.clone()));
        let again = tree().tick(&obs, &backend()).unwrap();
        assert_eq!(again.actions, vec![HighLevelAction::NoOp]);
        let obs = with_input(obs, "Yes, please go ahead.");
        let r = tree().tick(&obs, &backend()).unwrap();
        assert_eq!(r.path.last().unwrap(), "Modify_Subtask");
        assert_eq!(
            r.actions[..2],
            [
                HighLevelAction::Assign {
                    agent: Agent::R2,
                    subtasks: vec!["Get pepper".into()]
                },
                HighLevelAction::Assign {
                    agent: Agent::User,
                    subtasks: vec!["Prepare lettuce".into()]
                },
            ]
        );
    }

    #[test]
    fn got_it_already_interrupts_running_robot() {
        let obs = Observation {
            recipe_name: "Broccoli Soup".into(),
            r2: AgentView {
                current_subtask: "get broccoli".into(),
                status: AgentStatus::Running,
                ..AgentView::default()
            },
            ..Observation::default()
        };
        let obs = with_input(obs, "I got broccoli already. Don't worry about it.");
        let b = backend();
        let out = b.complete(&req("Execution", &obs)).unwrap();
        assert!(out.contains("Interrupt_Subtask"), "{out}\n{}", obs.render());
    }

    fn req(node: &str, obs: &Observation) -> CompletionRequest {
        CompletionRequest {
            node_name: node.into(),
            system: String::new(),
            instructions: String::new(),
            examples: vec![],
            rendered_observation: obs.render(),
            decoding: Default::default(),
        }
    }

    #[test]
    fn declines_incapable_requests() {
        let obs = Observation {
            recipe_name: "Tossed Salad".into(),
            ..Observation::default()
        };
        let obs = with_input(obs, "Can R1 get eggs for me?");
        let r = tree().tick(&obs, &backend()).unwrap();
        let HighLevelAction::Say { msg } = r.actions.last().unwrap() else { panic!() };
        assert!(msg.contains("Unfortunately, R1 cannot get eggs."), "{msg}");
        assert!(!r.actions.iter().any(|a| matches!(a, HighLevelAction::Assign { .. })));
    }

    #[test]
    fn one_prompt_gets_the_same_plan() {
        let obs = with_input(Observation::default(), "Let's make bibimbap!");
        let p = OnePromptPlanner::builtin(Arc::new(RecipeBook::builtin()));
        let r = p.tick(&obs, &backend()).unwrap();
        assert_eq!(r.actions[0], HighLevelAction::SetRecipe { name: "Bibimbap".into() });
    }

    #[test]
    fn codegen_uses_synthesis() {
        let prompt = crate::skills::render_codegen_prompt("get salt", &[]).unwrap();
        let r = CompletionRequest {
            node_name: CODEGEN_NODE.into(),
            system: String::new(),
            instructions: String::new(),
            examples: vec![],
            rendered_observation: prompt,
            decoding: Default::default(),
        };
        assert_eq!(
            backend().complete(&r).unwrap(),
            "go_to(PANTRY)\npick_up_item(SALT)\ngo_to(TABLE)\nplace_item_at(TABLE)\n"
        );
    }
}
