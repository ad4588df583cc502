//! The planner-visible world snapshot and its canonical text form.
//!
//! Every node receives the same rendering. Scalar and list values are JSON so
//! the text parses back losslessly; chat history is one `- Speaker: text`
//! line per entry.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::action::{Agent, AgentStatus};

/// Name the planner uses for itself in chat history.
pub const PLANNER_SPEAKER: &str = "Mosaic";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Speaker {
    User,
    #[serde(rename = "Mosaic")]
    Planner,
}

impl Speaker {
    pub fn as_str(self) -> &'static str {
        match self {
            Speaker::User => "User",
            Speaker::Planner => PLANNER_SPEAKER,
        }
    }
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatEntry {
    pub speaker: Speaker,
    pub text: String,
}

impl ChatEntry {
    pub fn user(text: impl Into<String>) -> Self {
        ChatEntry {
            speaker: Speaker::User,
            text: text.into(),
        }
    }

    pub fn planner(text: impl Into<String>) -> Self {
        ChatEntry {
            speaker: Speaker::Planner,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentView {
    pub subtask_queue: Vec<String>,
    pub current_subtask: String,
    pub status: AgentStatus,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub recipe_name: String,
    pub available_subtasks: Vec<String>,
    pub r1: AgentView,
    pub r2: AgentView,
    pub user_subtask_queue: Vec<String>,
    pub completed_subtask_list: Vec<String>,
    pub chat_history: Vec<ChatEntry>,
    pub user_input: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ObservationError {
    #[error("line {line}: expected `key: value`")]
    BadLine { line: usize },
    #[error("field `{field}`: {message}")]
    BadValue { field: String, message: String },
    #[error("line {line}: chat entry must look like `- Speaker: text`")]
    BadChat { line: usize },
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn json<T: Serialize + ?Sized>(v: &T) -> String {
    serde_json::to_string(v).expect("plain values serialize")
}

impl Observation {
    pub fn robot(&self, agent: Agent) -> Option<&AgentView> {
        match agent {
            Agent::R1 => Some(&self.r1),
            Agent::R2 => Some(&self.r2),
            Agent::User => None,
        }
    }

    pub fn robot_mut(&mut self, agent: Agent) -> Option<&mut AgentView> {
        match agent {
            Agent::R1 => Some(&mut self.r1),
            Agent::R2 => Some(&mut self.r2),
            Agent::User => None,
        }
    }

    /// Queue of any agent, the user's included.
    pub fn queue(&self, agent: Agent) -> &[String] {
        match agent {
            Agent::R1 => &self.r1.subtask_queue,
            Agent::R2 => &self.r2.subtask_queue,
            Agent::User => &self.user_subtask_queue,
        }
    }

    /// Canonical text fed to every planner node.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("recipe_name: {}\n", json(&self.recipe_name)));
        out.push_str(&format!("available_subtasks: {}\n", json(&self.available_subtasks)));
        for (name, view) in [("R2", &self.r2), ("R1", &self.r1)] {
            out.push_str(&format!("{name}_subtask_queue: {}\n", json(&view.subtask_queue)));
            out.push_str(&format!("{name}_current_subtask: {}\n", json(&view.current_subtask)));
            out.push_str(&format!("{name}_status: {}\n", json(view.status.prompt_word())));
        }
        out.push_str(&format!("user_subtask_queue: {}\n", json(&self.user_subtask_queue)));
        out.push_str(&format!("completed_subtask_list: {}\n", json(&self.completed_subtask_list)));
        out.push_str("chat_history:\n");
        for entry in &self.chat_history {
            out.push_str(&format!("- {}: {}\n", entry.speaker, one_line(&entry.text)));
        }
        out.push_str(&format!("user_input: {}\n", json(&one_line(&self.user_input))));
        out
    }

    /// Hex SHA-256 of the rendering.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.render().as_bytes()))
    }

    /// Inverse of [`Observation::render`]. Unknown keys are ignored.
    pub fn parse(text: &str) -> Result<Observation, ObservationError> {
        let fields = field_map(text)?;
        let mut obs = Observation::default();
        let get_str = |k: &str| -> Result<String, ObservationError> {
            match fields.get(k) {
                None => Ok(String::new()),
                Some(v) => serde_json::from_str::<String>(v).map_err(|e| ObservationError::BadValue {
                    field: k.to_string(),
                    message: e.to_string(),
                }),
            }
        };
        let get_list = |k: &str| -> Result<Vec<String>, ObservationError> {
            match fields.get(k) {
                None => Ok(Vec::new()),
                Some(v) => parse_list(v).ok_or_else(|| ObservationError::BadValue {
                    field: k.to_string(),
                    message: format!("not a list of strings: {v}"),
                }),
            }
        };
        let get_status = |k: &str| -> Result<AgentStatus, ObservationError> {
            let s = get_str(k)?;
            if s.is_empty() {
                return Ok(AgentStatus::Idle);
            }
            AgentStatus::parse_word(&s).ok_or_else(|| ObservationError::BadValue {
                field: k.to_string(),
                message: format!("unknown status `{s}`"),
            })
        };
        obs.recipe_name = get_str("recipe_name")?;
        obs.available_subtasks = get_list("available_subtasks")?;
        for (name, agent) in [("R2", Agent::R2), ("R1", Agent::R1)] {
            let view = AgentView {
                subtask_queue: get_list(&format!("{name}_subtask_queue"))?,
                current_subtask: get_str(&format!("{name}_current_subtask"))?,
                status: get_status(&format!("{name}_status"))?,
            };
            *obs.robot_mut(agent).expect("robot") = view;
        }
        obs.user_subtask_queue = get_list("user_subtask_queue")?;
        obs.completed_subtask_list = get_list("completed_subtask_list")?;
        obs.user_input = get_str("user_input")?;
        if let Some(chat) = fields.get("chat_history") {
            for (i, line) in chat.lines().enumerate() {
                let body = line.trim().strip_prefix("- ").ok_or(ObservationError::BadChat { line: i + 1 })?;
                let (speaker, text) = body.split_once(':').ok_or(ObservationError::BadChat { line: i + 1 })?;
                let speaker = match speaker.trim() {
                    "User" => Speaker::User,
                    _ => Speaker::Planner,
                };
                obs.chat_history.push(ChatEntry {
                    speaker,
                    text: text.trim().to_string(),
                });
            }
        }
        Ok(obs)
    }
}

/// Parses a list written as JSON or with single-quoted items.
pub fn parse_list(v: &str) -> Option<Vec<String>> {
    if let Ok(list) = serde_json::from_str::<Vec<String>>(v) {
        return Some(list);
    }
    let inner = v.trim().strip_prefix('[')?.strip_suffix(']')?;
    if inner.trim().is_empty() {
        return Some(Vec::new());
    }
    inner
        .split(',')
        .map(|item| {
            let t = item.trim();
            t.strip_prefix('\'')
                .and_then(|t| t.strip_suffix('\''))
                .or_else(|| t.strip_prefix('"').and_then(|t| t.strip_suffix('"')))
                .map(str::to_string)
        })
        .collect()
}

/// Splits a rendered observation into raw field texts. The value of
/// `chat_history` is its entry lines joined by newlines.
pub fn field_map(text: &str) -> Result<BTreeMap<String, String>, ObservationError> {
    let mut fields = BTreeMap::new();
    let mut chat: Option<Vec<String>> = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if let Some(lines) = chat.as_mut() {
            if line.trim_start().starts_with("- ") {
                lines.push(line.trim().to_string());
                continue;
            }
            fields.insert("chat_history".to_string(), lines.join("\n"));
            chat = None;
        }
        let (key, value) = line.split_once(':').ok_or(ObservationError::BadLine { line: i + 1 })?;
        let key = key.trim();
        if key == "chat_history" {
            chat = Some(Vec::new());
            continue;
        }
        fields.insert(key.to_string(), value.trim().to_string());
    }
    if let Some(lines) = chat {
        fields.insert("chat_history".to_string(), lines.join("\n"));
    }
    Ok(fields)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Observation {
        Observation {
            recipe_name: "Caesar Salad".into(),
            available_subtasks: vec!["Get pepper".into(), "Prepare lettuce".into()],
            r2: AgentView {
                subtask_queue: vec!["Get ranch sauce".into()],
                current_subtask: "get salt".into(),
                status: AgentStatus::Running,
            },
            r1: AgentView {
                status: AgentStatus::Interrupted,
                ..AgentView::default()
            },
            user_subtask_queue: vec![],
            completed_subtask_list: vec!["stir pot#2".into()],
            chat_history: vec![
                ChatEntry::user("Let's make caesar salad: now!"),
                ChatEntry::planner("Shall R2 get pepper for you?"),
            ],
            user_input: "Quote \" inside".into(),
        }
    }

    #[test]
    fn render_parse_round_trip() {
        let o = sample();
        let text = o.render();
        assert!(text.contains("R1_status: \"Killed\""));
        assert!(text.contains("- Mosaic: Shall R2 get pepper for you?"));
        assert_eq!(Observation::parse(&text).unwrap(), o);
    }

    #[test]
    fn render_is_stable() {
        assert_eq!(sample().render(), sample().render());
        assert_eq!(sample().hash(), sample().hash());
        let mut other = sample();
        other.user_input.clear();
        assert_ne!(other.hash(), sample().hash());
    }

    #[test]
    fn python_style_lists_are_accepted() {
        assert_eq!(
            parse_list("['get lettuce','mix', 'get pepper']").unwrap(),
            vec!["get lettuce", "mix", "get pepper"]
        );
        assert_eq!(parse_list("[]").unwrap(), Vec::<String>::new());
        assert!(parse_list("nope").is_none());
    }
}
