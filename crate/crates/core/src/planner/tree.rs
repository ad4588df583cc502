//! Behavior tree configuration and per-node output schemas.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use super::action::{Agent, AgentStatus};
use super::capability::CapabilityTable;
use crate::recipe::RecipeBook;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Decision,
    Action,
    /// Leaf that emits `no_op` without querying the model.
    Noop,
}

/// Value domain of one output key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    /// Non-empty string.
    Text,
    /// Name of a recipe in the book.
    Recipe,
    /// List of labels.
    List,
    /// List of labels the owning agent (from the key prefix) can take.
    Queue,
    /// Agent status word.
    Status,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    pub kind: NodeKind,
    /// Prompt document; defaults to the node name.
    #[serde(default)]
    pub prompt: Option<String>,
    #[serde(default)]
    pub children: Vec<String>,
    #[serde(default)]
    pub fallback: Option<String>,
    #[serde(default)]
    pub outputs: BTreeMap<String, ValueKind>,
}

impl NodeSpec {
    pub fn prompt_name(&self) -> &str {
        self.prompt.as_deref().unwrap_or(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub root: String,
    pub max_retries: u32,
    #[serde(rename = "node")]
    pub nodes: Vec<NodeSpec>,
}

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("reading {0}: {1}")]
    Io(String, std::io::Error),
    #[error("parsing tree: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("node `{0}` is defined twice")]
    DuplicateNode(String),
    #[error("root node `{0}` is not defined")]
    MissingRoot(String),
    #[error("node `{node}` refers to undefined node `{child}`")]
    UnknownChild { node: String, child: String },
    #[error("decision node `{0}` has no children")]
    NoChildren(String),
    #[error("tree has a cycle through `{0}`")]
    Cycle(String),
}

pub const DEFAULT_TREE: &str = include_str!("../../assets/tree.toml");

impl Default for TreeConfig {
    fn default() -> Self {
        Self::from_toml(DEFAULT_TREE).expect("builtin tree is valid")
    }
}

impl TreeConfig {
    pub fn from_toml(text: &str) -> Result<Self, TreeError> {
        let tree: TreeConfig = toml::from_str(text)?;
        tree.validate()?;
        Ok(tree)
    }

    pub fn load(path: &Path) -> Result<Self, TreeError> {
        let text = std::fs::read_to_string(path).map_err(|e| TreeError::Io(path.display().to_string(), e))?;
        Self::from_toml(&text)
    }

    pub fn node(&self, name: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.name == name)
    }

    /// True when `to` is a child or the fallback of `from`.
    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        self.node(from)
            .is_some_and(|n| n.children.iter().any(|c| c == to) || n.fallback.as_deref() == Some(to))
    }

    pub fn validate(&self) -> Result<(), TreeError> {
        let mut seen = BTreeSet::new();
        for n in &self.nodes {
            if !seen.insert(n.name.as_str()) {
                return Err(TreeError::DuplicateNode(n.name.clone()));
            }
        }
        if self.node(&self.root).is_none() {
            return Err(TreeError::MissingRoot(self.root.clone()));
        }
        for n in &self.nodes {
            if n.kind == NodeKind::Decision && n.children.is_empty() {
                return Err(TreeError::NoChildren(n.name.clone()));
            }
            for c in n.children.iter().chain(n.fallback.iter()) {
                if self.node(c).is_none() {
                    return Err(TreeError::UnknownChild {
                        node: n.name.clone(),
                        child: c.clone(),
                    });
                }
            }
        }
        let mut state: BTreeMap<&str, u8> = BTreeMap::new();
        fn visit<'a>(tree: &'a TreeConfig, name: &'a str, state: &mut BTreeMap<&'a str, u8>) -> Result<(), TreeError> {
            match state.get(name) {
                Some(1) => return Err(TreeError::Cycle(name.to_string())),
                Some(_) => return Ok(()),
                None => {}
            }
            state.insert(name, 1);
            let node = tree.node(name).expect("checked above");
            for c in node.children.iter().chain(node.fallback.iter()) {
                visit(tree, c, state)?;
            }
            state.insert(name, 2);
            Ok(())
        }
        visit(self, &self.root, &mut state)
    }
}

/// Lowercase, spaces to underscores, no "updated_" prefix.
pub fn normalize_key(key: &str) -> String {
    let k = key.trim().to_lowercase().replace([' ', '-'], "_");
    k.strip_prefix("updated_").map(str::to_string).unwrap_or(k)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InvalidOutput {
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("key `{key}`: {message}")]
    BadValue { key: String, message: String },
    #[error("decision `{decision}` is not one of {allowed:?}")]
    BadDecision { decision: String, allowed: Vec<String> },
}

/// Checks `raw` against the node's schema and returns it with normalized
/// keys. Decision nodes need a `decision` among their children.
pub fn validate_output(
    spec: &NodeSpec,
    raw: &Map<String, Value>,
    book: &RecipeBook,
    caps: &CapabilityTable,
) -> Result<Map<String, Value>, InvalidOutput> {
    let map: Map<String, Value> = raw.iter().map(|(k, v)| (normalize_key(k), v.clone())).collect();
    if spec.kind == NodeKind::Decision {
        let d = map
            .get("decision")
            .ok_or_else(|| InvalidOutput::MissingKey("decision".into()))?
            .as_str()
            .map(str::trim)
            .unwrap_or("");
        if !spec.children.iter().any(|c| c == d) {
            return Err(InvalidOutput::BadDecision {
                decision: d.to_string(),
                allowed: spec.children.clone(),
            });
        }
    }
    for (key, kind) in &spec.outputs {
        let v = map.get(key).ok_or_else(|| InvalidOutput::MissingKey(key.clone()))?;
        let bad = |message: String| InvalidOutput::BadValue {
            key: key.clone(),
            message,
        };
        match kind {
            ValueKind::Text => {
                if v.as_str().is_none_or(|s| s.trim().is_empty()) {
                    return Err(bad("expected a non-empty string".into()));
                }
            }
            ValueKind::Recipe => {
                let name = v.as_str().ok_or_else(|| bad("expected a string".into()))?;
                if book.get(name).is_none() {
                    return Err(bad(format!("unknown recipe `{name}`")));
                }
            }
            ValueKind::Status => {
                let word = v.as_str().ok_or_else(|| bad("expected a string".into()))?;
                if AgentStatus::parse_word(word).is_none() {
                    return Err(bad(format!("unknown status `{word}`")));
                }
            }
            ValueKind::List | ValueKind::Queue => {
                let items = string_list(v).ok_or_else(|| bad("expected a list of strings".into()))?;
                if *kind == ValueKind::Queue {
                    let agent = queue_owner(key).ok_or_else(|| bad("cannot tell whose queue this is".into()))?;
                    if let Some(item) = items.iter().find(|i| !caps.can(agent, i)) {
                        return Err(bad(format!("{agent} cannot `{item}`")));
                    }
                }
            }
        }
    }
    Ok(map)
}

/// Agent owning a `<agent>_subtask_queue` key.
pub fn queue_owner(key: &str) -> Option<Agent> {
    key.split('_').next()?.parse().ok()
}

/// List of strings; a single string counts as a one-item list.
pub fn string_list(v: &Value) -> Option<Vec<String>> {
    match v {
        Value::Array(items) => items.iter().map(|i| i.as_str().map(|s| s.trim().to_string())).collect(),
        Value::String(s) if s.trim().is_empty() => Some(Vec::new()),
        Value::String(s) => Some(vec![s.trim().to_string()]),
        Value::Null => Some(Vec::new()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn obj(v: Value) -> Map<String, Value> {
        v.as_object().unwrap().clone()
    }

    #[test]
    fn builtin_tree_is_valid() {
        let t = TreeConfig::default();
        assert_eq!(t.root, "Decision");
        assert_eq!(t.max_retries, 3);
        assert!(t.has_edge("Decision", "Recipe"));
        assert!(t.has_edge("Execution", "Overall_Clarify"));
        assert!(!t.has_edge("Recipe", "Modify_Subtask"));
        assert_eq!(t.node("Clarify_Recipe").unwrap().prompt_name(), "Overall_Clarify");
    }

    #[test]
    fn structural_errors() {
        let cyc = "root = \"A\"\nmax_retries = 1\n[[node]]\nname = \"A\"\nkind = \"decision\"\nchildren = [\"B\"]\n[[node]]\nname = \"B\"\nkind = \"decision\"\nchildren = [\"A\"]\n";
        assert!(matches!(TreeConfig::from_toml(cyc), Err(TreeError::Cycle(_))));
        let missing = "root = \"A\"\nmax_retries = 1\n[[node]]\nname = \"A\"\nkind = \"decision\"\nchildren = [\"Z\"]\n";
        assert!(matches!(TreeConfig::from_toml(missing), Err(TreeError::UnknownChild { .. })));
        let empty = "root = \"A\"\nmax_retries = 1\n[[node]]\nname = \"A\"\nkind = \"decision\"\n";
        assert!(matches!(TreeConfig::from_toml(empty), Err(TreeError::NoChildren(_))));
        let noroot = "root = \"Q\"\nmax_retries = 1\n[[node]]\nname = \"A\"\nkind = \"noop\"\n";
        assert!(matches!(TreeConfig::from_toml(noroot), Err(TreeError::MissingRoot(_))));
    }

    #[test]
    fn decision_validation() {
        let t = TreeConfig::default();
        let book = RecipeBook::builtin();
        let caps = CapabilityTable::default();
        let exec = t.node("Execution").unwrap();
        assert!(validate_output(exec, &obj(json!({"reasoning": "r", "decision": "No_op"})), &book, &caps).is_ok());
        assert!(matches!(
            validate_output(exec, &obj(json!({"decision": "Make_Coffee"})), &book, &caps),
            Err(InvalidOutput::BadDecision { .. })
        ));
        assert!(matches!(
            validate_output(exec, &obj(json!({"reasoning": "r"})), &book, &caps),
            Err(InvalidOutput::MissingKey(_))
        ));
    }

    #[test]
    fn action_validation_normalizes_keys() {
        let t = TreeConfig::default();
        let book = RecipeBook::builtin();
        let caps = CapabilityTable::default();
        let set = t.node("Set_Recipe").unwrap();
        let out = validate_output(
            set,
            &obj(json!({"reasoning": "r", "recipe name": "Tossed Salad", "reply": "Let's go"})),
            &book,
            &caps,
        )
        .unwrap();
        assert_eq!(out["recipe_name"], "Tossed Salad");
        assert!(validate_output(set, &obj(json!({"recipe name": "Burger", "reply": "x"})), &book, &caps).is_err());

        let modify = t.node("Modify_Subtask").unwrap();
        let good = json!({
            "updated R2_subtask_queue": ["get pepper"],
            "updated R1_subtask_queue": ["stir food"],
            "updated user_subtask_queue": ["chop carrots"],
            "updated completed_subtask_list": [],
            "reply": "ok"
        });
        assert!(validate_output(modify, &obj(good), &book, &caps).is_ok());
        let bad = json!({
            "updated R2_subtask_queue": ["prepare vegetables"],
            "updated R1_subtask_queue": [],
            "updated user_subtask_queue": [],
            "updated completed_subtask_list": [],
            "reply": "ok"
        });
        assert!(matches!(
            validate_output(modify, &obj(bad), &book, &caps),
            Err(InvalidOutput::BadValue { .. })
        ));
        let interrupt = t.node("Interrupt_Subtask").unwrap();
        let out = validate_output(
            interrupt,
            &obj(json!({"R2_status": "Killed", "R1_status": "Idle", "completed_subtask_list": ["get broccoli"], "reply": "R2 will no longer get broccoli"})),
            &book,
            &caps,
        );
        assert!(out.is_ok());
    }
}
