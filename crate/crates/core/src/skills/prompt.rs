//! Code generation prompt: the fixed template plus a per-subtask query.

use serde::{Deserialize, Serialize};

use super::CodegenError;
use crate::planner::observation::parse_list;
use crate::prompts::CODEGEN_TEMPLATE;

pub const HEADER_SEPARATOR: &str = "<header_example_separator>";
pub const EXAMPLE_SEPARATOR: &str = "<example_separator>";
pub const QUERY_CODE_SEPARATOR: &str = "<query_code_separator>";
const COMPLETED_KEY: &str = "completed_action_functions:";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodegenQuery {
    pub subtask: String,
    pub completed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodegenExample {
    pub query: CodegenQuery,
    pub code: String,
}

fn quote_list(items: &[String]) -> String {
    let quoted: Vec<String> = items
        .iter()
        .map(|s| serde_json::to_string(s).expect("strings serialize"))
        .collect();
    format!("[{}]", quoted.join(", "))
}

impl CodegenQuery {
    /// The query stanza as it appears after the last example.
    pub fn render(&self) -> String {
        format!(
            "\"\"\"\n{}\n\n{COMPLETED_KEY} {}\n\"\"\"\n{QUERY_CODE_SEPARATOR}\n",
            self.subtask.trim(),
            quote_list(&self.completed)
        )
    }
}

/// Full prompt: the template followed by the query for `subtask`.
pub fn render_codegen_prompt(subtask: &str, completed: &[String]) -> Result<String, CodegenError> {
    if subtask.trim().is_empty() {
        return Err(CodegenError::EmptySubtask);
    }
    let query = CodegenQuery {
        subtask: subtask.trim().to_string(),
        completed: completed.to_vec(),
    };
    let mut out = CODEGEN_TEMPLATE.trim_end().to_string();
    out.push('\n');
    out.push_str(EXAMPLE_SEPARATOR);
    out.push('\n');
    out.push_str(&query.render());
    Ok(out)
}

fn parse_stanza(stanza: &str) -> Option<CodegenQuery> {
    let inner = stanza.trim().strip_prefix("\"\"\"")?.trim_end().strip_suffix("\"\"\"")?;
    let mut subtask = None;
    let mut completed = Vec::new();
    for line in inner.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some(list) = line.strip_prefix(COMPLETED_KEY) {
            completed = parse_list(list.trim())?;
        } else if subtask.is_none() {
            subtask = Some(line.to_string());
        }
    }
    Some(CodegenQuery {
        subtask: subtask?,
        completed,
    })
}

/// Recovers the query from a rendered prompt or a bare query stanza.
pub fn parse_codegen_query(text: &str) -> Option<CodegenQuery> {
    let tail = text.rsplit(EXAMPLE_SEPARATOR).next()?;
    let stanza = tail.split(QUERY_CODE_SEPARATOR).next()?;
    parse_stanza(stanza)
}

/// The worked examples embedded in the template, in order.
pub fn codegen_examples() -> Vec<CodegenExample> {
    let body = CODEGEN_TEMPLATE.split_once(HEADER_SEPARATOR).map(|(_, b)| b).unwrap_or("");
    body.split(EXAMPLE_SEPARATOR)
        .filter_map(|block| {
            let (stanza, code) = block.split_once(QUERY_CODE_SEPARATOR)?;
            Some(CodegenExample {
                query: parse_stanza(stanza)?,
                code: code.trim().to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skills::parse_skill_program;

    #[test]
    fn query_block_for_get_salt() {
        let p = render_codegen_prompt("get salt", &[]).unwrap();
        assert!(p.ends_with("<example_separator>\n\"\"\"\nget salt\n\ncompleted_action_functions: []\n\"\"\"\n<query_code_separator>\n"));
        assert!(p.starts_with("# Python mobile robot"));
        let q = parse_codegen_query(&p).unwrap();
        assert_eq!(q.subtask, "get salt");
        assert!(q.completed.is_empty());
    }

    #[test]
    fn completed_calls_listed_verbatim() {
        let done = vec!["pick_up_item('LADLE')".to_string(), "place_item_at('POT')".to_string()];
        let p = render_codegen_prompt("stir the soup", &done).unwrap();
        assert!(p.contains("completed_action_functions: [\"pick_up_item('LADLE')\", \"place_item_at('POT')\"]"));
        assert_eq!(parse_codegen_query(&p).unwrap().completed, done);
    }

    #[test]
    fn empty_subtask_is_an_error() {
        assert_eq!(render_codegen_prompt("  ", &[]), Err(CodegenError::EmptySubtask));
    }

    #[test]
    fn template_examples_parse() {
        let ex = codegen_examples();
        assert_eq!(ex.len(), 11);
        assert_eq!(ex[0].query.subtask, "get can of corn");
        assert_eq!(ex[0].query.completed, vec!["go_to('PANTRY')"]);
        for e in &ex {
            parse_skill_program(&e.code).unwrap_or_else(|err| panic!("{}: {err}", e.query.subtask));
        }
    }
}
