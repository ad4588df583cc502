//! Controlled chat language shared by scripted users, the deterministic
//! planner backend and the transcript checkers.
//!
//! Scripted users speak through [`user_text`]; the planner backend reads
//! free text with [`parse_user_text`], which also accepts common variants.
//! Planner replies are built with the `planner_*` helpers and read back with
//! [`extract_proposals`] and [`extract_claims`].

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::planner::Agent;

/// What a user turn asks for. Every scripted turn carries one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "intent", rename_all = "snake_case")]
pub enum Intent {
    ProposeRecipe { name: String },
    ProposeVague { hint: String },
    ProposeNonexistent { dish: String },
    Approve,
    Reject,
    Reassign { subtask: String, agent: Agent },
    AddSubtask { subtask: String, agent: Agent },
    ReportDone { subtask: String },
    InterruptRequest { agent: Agent },
    Smalltalk,
}

impl Intent {
    pub fn tag(&self) -> &'static str {
        match self {
            Intent::ProposeRecipe { .. } => "propose_recipe",
            Intent::ProposeVague { .. } => "propose_vague",
            Intent::ProposeNonexistent { .. } => "propose_nonexistent",
            Intent::Approve => "approve",
            Intent::Reject => "reject",
            Intent::Reassign { .. } => "reassign",
            Intent::AddSubtask { .. } => "add_subtask",
            Intent::ReportDone { .. } => "report_done",
            Intent::InterruptRequest { .. } => "interrupt_request",
            Intent::Smalltalk => "smalltalk",
        }
    }

    /// Subtask the turn asks some agent to take, with that agent.
    pub fn request(&self) -> Option<(&str, Agent)> {
        match self {
            Intent::Reassign { subtask, agent } | Intent::AddSubtask { subtask, agent } => Some((subtask, *agent)),
            _ => None,
        }
    }
}

/// Canonical user wording for an intent.
pub fn user_text(intent: &Intent) -> String {
    match intent {
        Intent::ProposeRecipe { name } => format!("Let's make {name}!"),
        Intent::ProposeVague { hint } => format!("I want something with {hint}."),
        Intent::ProposeNonexistent { dish } => format!("Can we make {dish}?"),
        Intent::Approve => "Yes, please go ahead.".to_string(),
        Intent::Reject => "No, not now.".to_string(),
        Intent::Reassign { subtask, agent: Agent::User } => format!("I will handle {subtask}."),
        Intent::Reassign { subtask, agent } => format!("Let {agent} do {subtask} instead."),
        Intent::AddSubtask { subtask, agent: Agent::User } => format!("I will also {subtask}."),
        Intent::AddSubtask { subtask, agent } => format!("Can {agent} {subtask} for me?"),
        Intent::ReportDone { subtask } => format!("I finished {subtask}."),
        Intent::InterruptRequest { agent } => format!("{agent}, stop!"),
        Intent::Smalltalk => "Thanks!".to_string(),
    }
}

macro_rules! re {
    ($name:ident, $pat:expr) => {
        static $name: LazyLock<Regex> = LazyLock::new(|| Regex::new($pat).expect("valid pattern"));
    };
}

re!(RE_MAKE, r"(?i)^(?:let'?s|let us|i want to|can we|could we|i'd like to)\s+(?:make|cook)\s+(?:some\s+|a\s+|an\s+)?(.+?)[.!?]*$");
re!(RE_VAGUE, r"(?i)^i (?:want|would like|feel like) (?:something|a dish|food) (?:with|using|that has) (.+?)[.!?]*$");
re!(RE_APPROVE, r"(?i)^(?:yes|yeah|yep|ok|okay|sure|sounds good|go ahead|perfect|great|sweet|good|please do)\b");
re!(RE_REJECT, r"(?i)^(?:no|nope|nah|not now|don't)\b");
re!(RE_HANDLE, r"(?i)^(?:i will|i'll|i can|let me)\s+(?:handle|do|take care of|take)\s+(.+?)[.!?]*$");
re!(RE_ALSO, r"(?i)^(?:i will|i'll) also\s+(.+?)[.!?]*$");
re!(RE_LET_ROBOT, r"(?i)^let (r1|r2) (?:do |handle )?(.+?)(?: instead)?[.!?]*$");
re!(RE_CAN_ROBOT, r"(?i)^(?:can|could) (r1|r2) (?:please )?(.+?)(?: for me)?[.!?]*$");
re!(RE_DONE, r"(?i)^(?:(?:nah|no|ok|okay|yes|well),?\s+)?i(?:'ve| have)? (?:finished|completed|done with|am done with|got)\s+(.+?)(?: already)?[.!?]*$");
re!(RE_STOP_A, r"(?i)^(r1|r2)\s*,?\s*(?:stop|don't go|halt|cancel)\b");
re!(RE_STOP_B, r"(?i)^(?:stop|halt|cancel)\s+(r1|r2)\b");
re!(RE_SMALLTALK, r"(?i)^(?:thanks|thank you|cool|nice|hello|hi)\b");

/// Best-effort reading of a free-text user turn.
pub fn parse_user_text(text: &str) -> Intent {
    // Trailing pleasantries ("Don't worry about it.") should not hide the request.
    let t = text.trim();
    if let Some(i) = t.find(['.', '!', '?']).filter(|i| i + 1 < t.len()) {
        let first = parse_sentence(&t[..=i]);
        if first != Intent::Smalltalk {
            return first;
        }
    }
    parse_sentence(t)
}

fn parse_sentence(text: &str) -> Intent {
    let t = text.trim();
    let agent = |s: &str| s.parse::<Agent>().unwrap_or(Agent::User);
    if let Some(c) = RE_STOP_A.captures(t).or_else(|| RE_STOP_B.captures(t)) {
        return Intent::InterruptRequest { agent: agent(&c[1]) };
    }
    if let Some(c) = RE_DONE.captures(t) {
        return Intent::ReportDone {
            subtask: strip_articles(&c[1]),
        };
    }
    if let Some(c) = RE_ALSO.captures(t) {
        return Intent::AddSubtask {
            subtask: strip_articles(&c[1]),
            agent: Agent::User,
        };
    }
    if let Some(c) = RE_HANDLE.captures(t) {
        return Intent::Reassign {
            subtask: strip_articles(&c[1]),
            agent: Agent::User,
        };
    }
    if let Some(c) = RE_LET_ROBOT.captures(t) {
        return Intent::Reassign {
            subtask: strip_articles(&c[2]),
            agent: agent(&c[1]),
        };
    }
    if let Some(c) = RE_CAN_ROBOT.captures(t) {
        return Intent::AddSubtask {
            subtask: strip_articles(&c[2]),
            agent: agent(&c[1]),
        };
    }
    if let Some(c) = RE_VAGUE.captures(t) {
        return Intent::ProposeVague {
            hint: c[1].trim().to_string(),
        };
    }
    if let Some(c) = RE_MAKE.captures(t) {
        let name = c[1].trim().to_string();
        return if t.to_lowercase().starts_with("can we") || t.to_lowercase().starts_with("could we") {
            Intent::ProposeNonexistent { dish: name }
        } else {
            Intent::ProposeRecipe { name }
        };
    }
    if RE_APPROVE.is_match(t) {
        return Intent::Approve;
    }
    if RE_REJECT.is_match(t) {
        return Intent::Reject;
    }
    if RE_SMALLTALK.is_match(t) {
        return Intent::Smalltalk;
    }
    Intent::Smalltalk
}

/// Lowercases, drops leading articles and surrounding punctuation.
pub fn strip_articles(s: &str) -> String {
    let words: Vec<String> = s
        .split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric() && c != '#').to_lowercase())
        .filter(|w| !w.is_empty())
        .collect();
    let mut start = 0;
    while start < words.len() && matches!(words[start].as_str(), "the" | "a" | "an") {
        start += 1;
    }
    words[start..].join(" ")
}

/// Matching key for subtask labels: lowercase, articles removed anywhere.
pub fn normalize_label(s: &str) -> String {
    strip_articles(s)
        .split(' ')
        .filter(|w| !matches!(*w, "the" | "a" | "an"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Resolves a user phrase against known labels: exact normalized match
/// first, then a unique containment match.
pub fn resolve_label<'a, I>(phrase: &str, candidates: I) -> Option<String>
where
    I: IntoIterator<Item = &'a String>,
{
    let want = normalize_label(phrase);
    if want.is_empty() {
        return None;
    }
    let cands: Vec<&String> = candidates.into_iter().collect();
    if let Some(c) = cands.iter().find(|c| normalize_label(c) == want) {
        return Some((*c).clone());
    }
    let partial: Vec<&&String> = cands
        .iter()
        .filter(|c| {
            let n = normalize_label(c);
            n.contains(&want) || want.contains(&n)
        })
        .collect();
    match partial.as_slice() {
        [one] => Some((**one).clone()),
        _ => None,
    }
}

// Planner wording.

pub fn planner_propose(agent: Agent, label: &str) -> String {
    match agent {
        Agent::User => format!("None of the robots can {label}. Can you do it and let me know when you finish?"),
        robot => format!("Shall {robot} {label} for you?"),
    }
}

pub fn planner_claim(agent: Agent, label: &str) -> String {
    match agent {
        Agent::User => format!("You will {label}."),
        robot => format!("{robot} will {label}."),
    }
}

pub fn planner_decline(agent: Agent, label: &str) -> String {
    format!("Unfortunately, {agent} cannot {label}.")
}

pub fn planner_done_ack(label: &str) -> String {
    format!("Great, thanks for finishing {label}.")
}

pub fn planner_stopped(agent: Agent, label: &str) -> String {
    format!("{agent} has stopped {label}.")
}

re!(RE_PROPOSE_ROBOT, r"(?i)\b(?:shall|sr2l|can)\s+(r1|r2)\s+(?:go\s+)?(.+?)\s+for you\?");
re!(RE_PROPOSE_USER, r"(?i)none of the robots can\s+(.+?)\.\s*can you");

/// (agent, subtask) pairs offered in a planner message.
pub fn extract_proposals(text: &str) -> Vec<(Agent, String)> {
    let mut out = Vec::new();
    for c in RE_PROPOSE_ROBOT.captures_iter(text) {
        if let Ok(agent) = c[1].parse::<Agent>() {
            out.push((agent, c[2].trim().to_string()));
        }
    }
    for c in RE_PROPOSE_USER.captures_iter(text) {
        out.push((Agent::User, c[1].trim().to_string()));
    }
    out
}

/// Verbs that make "X will <verb>" a task commitment.
const TASK_VERBS: &[&str] = &[
    "get", "put", "stir", "mix", "pour", "stack", "spread", "hand", "handover", "fetch", "handle", "prepare", "chop",
    "cut", "do", "take", "bring", "go", "start", "cook", "boil", "toast", "mash", "scoop", "place", "season",
    "simmer", "melt", "wash", "slice", "add", "grab", "deliver", "work",
];

re!(
    RE_CLAIM,
    r"(?i)\b(r1|r2|you)\s+will\s+((?:now\s+|also\s+|then\s+|go\s+|be\s+)*)([a-z]+)([^.!?;]*)"
);
re!(RE_SEND_CLAIM, r"(?i)\bi(?:'ll| will) (?:send|have|ask) (r1|r2) to\s+([a-z]+)([^.!?;]*)");

/// A commitment stated in a planner message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub agent: Agent,
    pub verb: String,
    /// The claimed task text starting at the verb, e.g. "get pepper".
    pub task: String,
}

fn verb_stem(word: &str) -> String {
    let w = word.to_lowercase();
    for suffix in ["ing", "s"] {
        if let Some(stem) = w.strip_suffix(suffix) {
            if TASK_VERBS.contains(&stem) {
                return stem.to_string();
            }
            // stirring -> stir, getting -> get
            if suffix == "ing" && stem.len() > 2 {
                let b = stem.as_bytes();
                if b[b.len() - 1] == b[b.len() - 2] {
                    let s = &stem[..stem.len() - 1];
                    if TASK_VERBS.contains(&s) {
                        return s.to_string();
                    }
                }
                let e = format!("{stem}e");
                if TASK_VERBS.contains(&e.as_str()) {
                    return e;
                }
            }
        }
    }
    w
}

/// Task commitments ("R2 will get pepper", "you will handle ...") in a
/// planner message. Negated forms are not claims.
pub fn extract_claims(text: &str) -> Vec<Claim> {
    let mut out = Vec::new();
    for c in RE_CLAIM.captures_iter(text) {
        let verb = c[3].to_lowercase();
        if matches!(verb.as_str(), "not" | "no" | "never") || !TASK_VERBS.contains(&verb.as_str()) {
            continue;
        }
        let Ok(agent) = c[1].parse::<Agent>() else { continue };
        out.push(Claim {
            agent,
            verb: verb.clone(),
            task: format!("{verb}{}", &c[4]).trim().to_lowercase(),
        });
    }
    for c in RE_SEND_CLAIM.captures_iter(text) {
        let verb = c[2].to_lowercase();
        if !TASK_VERBS.contains(&verb.as_str()) {
            continue;
        }
        let Ok(agent) = c[1].parse::<Agent>() else { continue };
        out.push(Claim {
            agent,
            verb: verb.clone(),
            task: format!("{verb}{}", &c[3]).trim().to_lowercase(),
        });
    }
    out
}

/// Whether `claim` is backed by assigning `label` to the same agent: the
/// texts overlap, or the claimed verb (or the object of "handle X-ing")
/// names the label's leading verb.
pub fn claim_matches(claim: &Claim, agent: Agent, label: &str) -> bool {
    if claim.agent != agent {
        return false;
    }
    let l = normalize_label(label);
    let t = normalize_label(&claim.task);
    if t.contains(&l) || l.contains(&t) {
        return true;
    }
    let label_verb = l.split(' ').next().unwrap_or_default().to_string();
    let mut verbs = vec![verb_stem(&claim.verb)];
    if matches!(claim.verb.as_str(), "handle" | "do" | "take") {
        if let Some(obj) = t.split(' ').nth(1) {
            verbs.push(verb_stem(obj));
        }
    }
    verbs.iter().any(|v| *v == label_verb)
}

const DECLINE_WORDS: &[&str] = &["can't", "cannot", "unable", "not within", "beyond", "not able"];

/// Whether a planner message declines a request aimed at `agent`.
pub fn declines_for(text: &str, agent: Agent) -> bool {
    let lower = text.to_lowercase();
    let names_agent = match agent {
        Agent::User => lower.contains("you"),
        robot => lower.contains(&robot.as_str().to_lowercase()) || lower.contains("robot"),
    };
    names_agent && DECLINE_WORDS.iter().any(|w| lower.contains(w))
}
