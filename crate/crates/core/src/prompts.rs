//! Prompt documents for planner nodes.
//!
//! The format looks like YAML but is not: `examples:` may repeat and the
//! example bodies are free text, so it gets its own small line parser.
//! Top-level `key: value` lines start at column 0, `key: |` opens an
//! indented block, and example items are `- description:`,
//! `- observation: |` and `- response: |` entries.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("line {line}: unexpected text outside any field: `{text}`")]
    UnexpectedLine { line: usize, text: String },
    #[error("line {line}: example entry `{key}` is not one of description, observation, response")]
    UnknownExampleKey { line: usize, key: String },
    #[error("prompt has no `{0}` field")]
    MissingField(&'static str),
    #[error("no prompt registered for node `{0}`")]
    UnknownNode(String),
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptExample {
    pub description: String,
    pub observation: String,
    pub response: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptDoc {
    pub version: Option<String>,
    pub node_type: Option<String>,
    pub node_name: Option<String>,
    pub prompt_description: Option<String>,
    pub prompt_version: Option<String>,
    pub system: String,
    pub instructions: String,
    pub examples: Vec<PromptExample>,
    /// Top-level keys this parser does not interpret, kept verbatim.
    pub extra: BTreeMap<String, String>,
}

/// Values substituted for `<name>` placeholders at render time.
pub type PromptVars = BTreeMap<String, String>;

fn top_level_key(line: &str) -> Option<(&str, &str)> {
    if line.starts_with([' ', '\t', '-']) {
        return None;
    }
    let (key, rest) = line.split_once(':')?;
    if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return None;
    }
    Some((key, rest.trim()))
}

fn example_key(line: &str) -> Option<(&str, &str)> {
    let body = line.strip_prefix("- ")?;
    let (key, rest) = body.split_once(':')?;
    let key = key.trim();
    if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return None;
    }
    Some((key, rest.trim()))
}

fn indent_of(line: &str) -> usize {
    line.chars()
        .take_while(|c| *c == ' ' || *c == '\t')
        .map(|c| if c == '\t' { 4 } else { 1 })
        .sum()
}

fn strip_indent(line: &str, n: usize) -> &str {
    let mut width = 0;
    for (i, c) in line.char_indices() {
        if width >= n {
            return &line[i..];
        }
        match c {
            ' ' => width += 1,
            '\t' => width += 4,
            _ => return &line[i..],
        }
    }
    ""
}

/// Reads an indented block starting at `start`; returns the text and the
/// index of the first line after it.
fn read_block(lines: &[&str], start: usize) -> (String, usize) {
    let mut end = start;
    while end < lines.len() {
        let l = lines[end];
        if !l.trim().is_empty() && indent_of(l) == 0 {
            break;
        }
        end += 1;
    }
    let indent = lines[start..end]
        .iter()
        .filter(|l| !l.trim().is_empty())
        .map(|l| indent_of(l))
        .min()
        .unwrap_or(0);
    let mut body: Vec<&str> = lines[start..end]
        .iter()
        .map(|l| strip_indent(l.trim_end(), indent))
        .collect();
    while body.last().is_some_and(|l| l.is_empty()) {
        body.pop();
    }
    (body.join("\n"), end)
}

pub fn parse_prompt_doc(text: &str) -> Result<PromptDoc, PromptError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut doc = PromptDoc::default();
    let mut have_system = false;
    let mut in_examples = false;
    let mut current: Option<PromptExample> = None;
    let mut i = 0;

    while i < lines.len() {
        let line = lines[i];
        if line.trim().is_empty() {
            i += 1;
            continue;
        }
        if let Some((key, value)) = top_level_key(line) {
            if let Some(ex) = current.take() {
                doc.examples.push(ex);
            }
            let (value, next) = if value == "|" {
                read_block(&lines, i + 1)
            } else {
                (value.to_string(), i + 1)
            };
            in_examples = key == "examples";
            match key {
                "version" => doc.version = Some(value),
                "node_type" => doc.node_type = Some(value),
                "node_name" => doc.node_name = Some(value),
                "prompt_description" => doc.prompt_description = Some(value),
                "prompt_version" => doc.prompt_version = Some(value),
                "system" => {
                    doc.system = value;
                    have_system = true;
                }
                "instructions" => doc.instructions = value,
                "examples" => {}
                other => {
                    doc.extra.insert(other.to_string(), value);
                }
            }
            i = next;
            continue;
        }
        if in_examples {
            if let Some((key, value)) = example_key(line) {
                let (value, next) = if value == "|" {
                    read_block(&lines, i + 1)
                } else {
                    (value.to_string(), i + 1)
                };
                let needs_new = match key {
                    "description" => current
                        .as_ref()
                        .is_some_and(|e| !e.description.is_empty() || !e.observation.is_empty()),
                    "observation" => current
                        .as_ref()
                        .is_some_and(|e| !e.observation.is_empty() || !e.response.is_empty()),
                    _ => false,
                };
                if needs_new {
                    doc.examples.extend(current.take());
                }
                let ex = current.get_or_insert_with(PromptExample::default);
                match key {
                    "description" => ex.description = value,
                    "observation" => ex.observation = value,
                    "response" => ex.response = value,
                    other => {
                        return Err(PromptError::UnknownExampleKey {
                            line: i + 1,
                            key: other.to_string(),
                        })
                    }
                }
                i = next;
                continue;
            }
        }
        return Err(PromptError::UnexpectedLine {
            line: i + 1,
            text: line.to_string(),
        });
    }
    if let Some(ex) = current.take() {
        doc.examples.push(ex);
    }
    if !have_system {
        return Err(PromptError::MissingField("system"));
    }
    Ok(doc)
}

/// Replaces every `<name>` occurrence for which a value is given.
pub fn substitute(text: &str, vars: &PromptVars) -> String {
    let mut out = text.to_string();
    for (k, v) in vars {
        out = out.replace(&format!("<{k}>"), v);
    }
    out
}

impl PromptDoc {
    /// System and instruction text with placeholders filled in.
    pub fn render_instructions(&self, vars: &PromptVars) -> (String, String) {
        (substitute(&self.system, vars), substitute(&self.instructions, vars))
    }
}

const BUILTIN: &[(&str, &str)] = &[
    ("Decision", include_str!("../assets/prompts/decision.prompt")),
    ("Recipe", include_str!("../assets/prompts/recipe.prompt")),
    ("Set_Recipe", include_str!("../assets/prompts/set_recipe.prompt")),
    (
        "Suggest_Alternative_Recipe",
        include_str!("../assets/prompts/suggest_alternative_recipe.prompt"),
    ),
    ("Overall_Clarify", include_str!("../assets/prompts/overall_clarify.prompt")),
    ("Execution", include_str!("../assets/prompts/execution.prompt")),
    ("Confirm_Subtask", include_str!("../assets/prompts/confirm_subtask.prompt")),
    ("Modify_Subtask", include_str!("../assets/prompts/modify_subtask.prompt")),
    ("Interrupt_Subtask", include_str!("../assets/prompts/interrupt_subtask.prompt")),
    ("All_Actions", include_str!("../assets/prompts/all_actions.prompt")),
    ("DAG_Generation", include_str!("../assets/prompts/dag_generation.prompt")),
];

/// Raw text of the code generation template shipped with the crate.
pub const CODEGEN_TEMPLATE: &str = include_str!("../assets/prompts/codegen_template.txt");

/// Prompt documents keyed by node name.
#[derive(Debug, Clone, Default)]
pub struct PromptLibrary {
    docs: BTreeMap<String, PromptDoc>,
}

impl PromptLibrary {
    pub fn builtin() -> Self {
        let mut lib = PromptLibrary::default();
        for (name, text) in BUILTIN {
            let doc = parse_prompt_doc(text).expect("builtin prompts parse");
            lib.docs.insert(name.to_string(), doc);
        }
        lib
    }

    /// Builtin prompts overridden by any `*.prompt` file in `dir`. The node
    /// name is the document's `node_name`, or the file stem otherwise.
    pub fn with_overrides(dir: &Path) -> Result<Self, PromptError> {
        let io = |p: &Path, e: std::io::Error| PromptError::Io {
            path: p.display().to_string(),
            message: e.to_string(),
        };
        let mut lib = Self::builtin();
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "prompt"))
            .collect();
        paths.sort();
        for p in paths {
            let text = std::fs::read_to_string(&p).map_err(|e| io(&p, e))?;
            let doc = parse_prompt_doc(&text)?;
            let name = doc
                .node_name
                .clone()
                .unwrap_or_else(|| p.file_stem().unwrap_or_default().to_string_lossy().into_owned());
            lib.docs.insert(name, doc);
        }
        Ok(lib)
    }

    pub fn insert(&mut self, name: impl Into<String>, doc: PromptDoc) {
        self.docs.insert(name.into(), doc);
    }

    pub fn get(&self, name: &str) -> Result<&PromptDoc, PromptError> {
        self.docs
            .get(name)
            .ok_or_else(|| PromptError::UnknownNode(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.docs.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_prompt_parses_with_examples() {
        for (name, text) in BUILTIN {
            let doc = parse_prompt_doc(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(!doc.system.is_empty(), "{name}");
            assert!(!doc.examples.is_empty(), "{name}");
            for ex in &doc.examples {
                assert!(!ex.observation.is_empty(), "{name}: {ex:?}");
                assert!(!ex.response.is_empty(), "{name}: {ex:?}");
            }
            if let Some(n) = &doc.node_name {
                assert_eq!(n, name);
            }
        }
    }

    #[test]
    fn repeated_examples_keys_accumulate() {
        let doc = PromptLibrary::builtin().get("Recipe").unwrap().clone();
        assert!(doc.examples.len() >= 3);
        assert_eq!(doc.node_type.as_deref(), Some("DecisionNode"));
        assert!(doc.examples[0].observation.contains("tossed salad"));
        assert!(doc.examples[0].response.contains("Set_Recipe"));
    }

    #[test]
    fn block_scalars_drop_common_indent() {
        let text = "system: |\n    line one\n\n      nested\ninstructions: |\n    do it\nexamples:\n- description: d\n- observation: |\n    obs: 1\n- response: |\n    {\"a\": 1}\n";
        let doc = parse_prompt_doc(text).unwrap();
        assert_eq!(doc.system, "line one\n\n  nested");
        assert_eq!(doc.instructions, "do it");
        assert_eq!(doc.examples.len(), 1);
        assert_eq!(doc.examples[0].description, "d");
        assert_eq!(doc.examples[0].response, "{\"a\": 1}");
    }

    #[test]
    fn observation_without_description_starts_new_example() {
        let text = "system: s\nexamples:\n- observation: |\n    a\n- response: |\n    b\n- observation: |\n    c\n- response: |\n    d\n";
        let doc = parse_prompt_doc(text).unwrap();
        assert_eq!(doc.examples.len(), 2);
        assert_eq!(doc.examples[1].observation, "c");
    }

    #[test]
    fn stray_text_is_reported() {
        let err = parse_prompt_doc("system: s\n  oops\n").unwrap_err();
        assert!(matches!(err, PromptError::UnexpectedLine { line: 2, .. }));
        assert_eq!(
            parse_prompt_doc("instructions: x\n").unwrap_err(),
            PromptError::MissingField("system")
        );
    }

    #[test]
    fn placeholders_substitute() {
        let mut vars = PromptVars::new();
        vars.insert("recipes".into(), "[\"Sundae\"]".into());
        let doc = PromptLibrary::builtin().get("Set_Recipe").unwrap().clone();
        let (_, instr) = doc.render_instructions(&vars);
        assert!(instr.contains("Recipe List: [\"Sundae\"]"));
        assert!(!instr.contains("<recipes>"));
    }
}
