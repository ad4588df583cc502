//! Ordered rule table mapping (node, observation predicates) to canned text.

use std::collections::HashSet;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{CompletionRequest, LlmBackend, LlmError};
use crate::planner::observation::field_map;

/// Condition on one observation field. `field = "*"` tests the whole
/// rendered observation. `contains` is case-insensitive, `equals` is exact
/// on the raw field text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Predicate {
    pub field: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equals: Option<String>,
}

impl Predicate {
    fn holds(&self, value: &str) -> bool {
        let contains_ok = self
            .contains
            .as_ref()
            .is_none_or(|c| value.to_lowercase().contains(&c.to_lowercase()));
        let equals_ok = self.equals.as_ref().is_none_or(|e| value == e);
        contains_ok && equals_ok
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedRule {
    /// Node name, or `*` for any node.
    pub node: String,
    pub response: String,
    #[serde(default)]
    pub once: bool,
    #[serde(default)]
    pub when: Vec<Predicate>,
}

impl ScriptedRule {
    pub fn new(node: &str, response: &str) -> Self {
        ScriptedRule {
            node: node.to_string(),
            response: response.to_string(),
            once: false,
            when: Vec::new(),
        }
    }

    pub fn when_contains(mut self, field: &str, needle: &str) -> Self {
        self.when.push(Predicate {
            field: field.to_string(),
            contains: Some(needle.to_string()),
            equals: None,
        });
        self
    }

    pub fn when_equals(mut self, field: &str, value: &str) -> Self {
        self.when.push(Predicate {
            field: field.to_string(),
            contains: None,
            equals: Some(value.to_string()),
        });
        self
    }

    pub fn consume_once(mut self) -> Self {
        self.once = true;
        self
    }

    fn is_catch_all_for(&self, node: &str) -> bool {
        (self.node == node || self.node == "*") && self.when.is_empty() && !self.once
    }
}

#[derive(Debug, Deserialize)]
struct RuleFile {
    #[serde(default)]
    rule: Vec<ScriptedRule>,
}

#[derive(Debug)]
pub struct ScriptedBackend {
    rules: Vec<ScriptedRule>,
    consumed: Mutex<HashSet<usize>>,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<ScriptedRule>) -> Self {
        ScriptedBackend {
            rules,
            consumed: Mutex::new(HashSet::new()),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, LlmError> {
        let file: RuleFile = toml::from_str(text).map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(Self::new(file.rule))
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn rules(&self) -> &[ScriptedRule] {
        &self.rules
    }

    /// Nodes from `nodes` that have no unconditional rule.
    pub fn missing_catch_alls<'a>(&self, nodes: impl IntoIterator<Item = &'a str>) -> Vec<String> {
        nodes
            .into_iter()
            .filter(|n| !self.rules.iter().any(|r| r.is_catch_all_for(n)))
            .map(str::to_string)
            .collect()
    }
}

impl LlmBackend for ScriptedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        let fields = field_map(&request.rendered_observation).unwrap_or_default();
        let mut consumed = self.consumed.lock().expect("rule state poisoned");
        for (i, rule) in self.rules.iter().enumerate() {
            if rule.node != "*" && rule.node != request.node_name {
                continue;
            }
            if rule.once && consumed.contains(&i) {
                continue;
            }
            let matches = rule.when.iter().all(|p| {
                let value = if p.field == "*" {
                    request.rendered_observation.as_str()
                } else {
                    fields.get(&p.field).map(String::as_str).unwrap_or("")
                };
                p.holds(value)
            });
            if matches {
                if rule.once {
                    consumed.insert(i);
                }
                return Ok(rule.response.clone());
            }
        }
        Err(LlmError::NoMatchingRule {
            node: request.node_name.clone(),
        })
    }
}
