//! Skill programs: the call-line language robots execute, its parser,
//! serializer and per-agent validation.

mod prompt;
mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planner::Agent;

pub use prompt::{codegen_examples, parse_codegen_query, render_codegen_prompt, CodegenExample, CodegenQuery};
pub use synth::{object_constants, synthesize_program};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SkillCall {
    pub skill: String,
    pub args: Vec<String>,
}

impl SkillCall {
    pub fn new(skill: &str, args: &[&str]) -> Self {
        SkillCall {
            skill: skill.to_string(),
            args: args.iter().map(|a| to_constant(a)).collect(),
        }
    }

    /// Form used in `completed_action_functions`, e.g. `go_to('PANTRY')`.
    pub fn completed_text(&self) -> String {
        let args: Vec<String> = self.args.iter().map(|a| format!("'{a}'")).collect();
        format!("{}({})", self.skill, args.join(", "))
    }

    pub fn arg(&self, i: usize) -> &str {
        self.args.get(i).map(String::as_str).unwrap_or("")
    }
}

impl fmt::Display for SkillCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.skill, self.args.join(", "))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillProgram {
    pub calls: Vec<SkillCall>,
    /// Commented-out calls that were already completed, as call text.
    pub skipped: Vec<String>,
}

pub const SKIPPED_SUFFIX: &str = "# already completed this action";

impl SkillProgram {
    /// Program text; skipped calls come first as comments.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for s in &self.skipped {
            out.push_str(&format!("# {s}  {SKIPPED_SUFFIX}\n"));
        }
        for c in &self.calls {
            out.push_str(&format!("{c}\n"));
        }
        out
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodegenError {
    #[error("subtask label is empty")]
    EmptySubtask,
    #[error("line {line}: construct not allowed: `{text}`")]
    DisallowedConstruct { line: usize, text: String },
    #[error("line {line}: unknown skill `{name}`")]
    UnknownSkill { line: usize, name: String },
    #[error("line {line}: `{skill}` takes {expected} argument(s), got {found}")]
    ArityMismatch {
        line: usize,
        skill: String,
        expected: usize,
        found: usize,
    },
    #[error("program has no skill calls")]
    NoSkills,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ValidationError {
    #[error("{agent} cannot execute `{skill}`")]
    SkillNotAvailable { skill: String, agent: Agent },
    #[error("unknown constant `{0}`")]
    UnknownConstant(String),
    #[error("unknown skill `{0}`")]
    UnknownSkill(String),
    #[error("`{skill}` takes {expected} argument(s), got {found}")]
    ArityMismatch { skill: String, expected: usize, found: usize },
}

#[derive(Debug, Error)]
pub enum SkillTableError {
    #[error("reading {0}: {1}")]
    Io(String, std::io::Error),
    #[error("parsing skill table: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("agent {agent} lists unknown skill `{skill}`")]
    UnknownSkill { agent: Agent, skill: String },
}

pub const DEFAULT_SKILLS: &str = include_str!("../../assets/skills.toml");

/// Skill arities and the skills each robot can execute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillTable {
    pub skills: BTreeMap<String, usize>,
    pub agents: BTreeMap<Agent, BTreeSet<String>>,
}

impl Default for SkillTable {
    fn default() -> Self {
        Self::from_toml(DEFAULT_SKILLS).expect("builtin skill table parses")
    }
}

static CALL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^([A-Za-z_][A-Za-z0-9_]*)\s*\((.*)\)\s*(#.*)?$").expect("call regex"));
static IDENT_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[A-Za-z_][A-Za-z0-9_]*$").expect("ident regex"));
static QUOTED_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"^(?:'([^'\\]*)'|"([^"\\]*)")$"#).expect("quoted regex"));

/// Uppercases and joins words with underscores: "can of corn" → CAN_OF_CORN.
pub fn to_constant(s: &str) -> String {
    s.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_ascii_uppercase)
        .collect::<Vec<_>>()
        .join("_")
}

fn parse_arg(raw: &str) -> Option<String> {
    let t = raw.trim();
    if IDENT_RE.is_match(t) {
        return Some(to_constant(t));
    }
    let caps = QUOTED_RE.captures(t)?;
    let inner = caps.get(1).or_else(|| caps.get(2))?.as_str();
    let c = to_constant(inner);
    (!c.is_empty()).then_some(c)
}

enum Line {
    Call(String, Vec<String>),
    NotACall,
}

fn parse_call(text: &str) -> Line {
    let Some(caps) = CALL_RE.captures(text) else {
        return Line::NotACall;
    };
    let name = caps[1].to_string();
    let inner = caps[2].trim();
    let mut args = Vec::new();
    if !inner.is_empty() {
        for raw in inner.split(',') {
            match parse_arg(raw) {
                Some(a) => args.push(a),
                None => return Line::NotACall,
            }
        }
    }
    Line::Call(name, args)
}

impl SkillTable {
    pub fn from_toml(text: &str) -> Result<Self, SkillTableError> {
        let table: SkillTable = toml::from_str(text)?;
        for (agent, skills) in &table.agents {
            if let Some(s) = skills.iter().find(|s| !table.skills.contains_key(*s)) {
                return Err(SkillTableError::UnknownSkill {
                    agent: *agent,
                    skill: s.clone(),
                });
            }
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, SkillTableError> {
        let text = std::fs::read_to_string(path).map_err(|e| SkillTableError::Io(path.display().to_string(), e))?;
        Self::from_toml(&text)
    }

    pub fn arity(&self, skill: &str) -> Option<usize> {
        self.skills.get(skill).copied()
    }

    pub fn skill_names(&self) -> impl Iterator<Item = &str> {
        self.skills.keys().map(String::as_str)
    }

    /// Parses generated program text. Import lines, blank lines and code
    /// fences are ignored; comments are kept as skipped calls when they wrap
    /// a call. Any other construct rejects the whole program.
    pub fn parse_program(&self, text: &str) -> Result<SkillProgram, CodegenError> {
        let mut program = SkillProgram::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let t = raw.trim();
            if t.is_empty() || t.starts_with("```") || t.starts_with("import ") || (t.starts_with("from ") && t.contains(" import ")) {
                continue;
            }
            if let Some(comment) = t.strip_prefix('#') {
                let body = comment.split('#').next().unwrap_or("").trim();
                if let Line::Call(name, args) = parse_call(body) {
                    if self.skills.contains_key(&name) {
                        program.skipped.push(SkillCall { skill: name, args }.to_string());
                    }
                }
                continue;
            }
            match parse_call(t) {
                Line::NotACall => {
                    return Err(CodegenError::DisallowedConstruct {
                        line,
                        text: t.to_string(),
                    })
                }
                Line::Call(name, args) => {
                    let expected = self.arity(&name).ok_or_else(|| CodegenError::UnknownSkill {
                        line,
                        name: name.clone(),
                    })?;
                    if expected != args.len() {
                        return Err(CodegenError::ArityMismatch {
                            line,
                            skill: name,
                            expected,
                            found: args.len(),
                        });
                    }
                    program.calls.push(SkillCall { skill: name, args });
                }
            }
        }
        if program.calls.is_empty() {
            return Err(CodegenError::NoSkills);
        }
        Ok(program)
    }

    /// Every problem with running `program` on `agent`, or Ok.
    pub fn validate_program(
        &self,
        program: &SkillProgram,
        agent: Agent,
        constants: &BTreeSet<String>,
    ) -> Result<(), Vec<ValidationError>> {
        let mut errors = Vec::new();
        let empty = BTreeSet::new();
        let allowed = self.agents.get(&agent).unwrap_or(&empty);
        for call in &program.calls {
            match self.arity(&call.skill) {
                None => errors.push(ValidationError::UnknownSkill(call.skill.clone())),
                Some(n) if n != call.args.len() => errors.push(ValidationError::ArityMismatch {
                    skill: call.skill.clone(),
                    expected: n,
                    found: call.args.len(),
                }),
                Some(_) => {}
            }
            if !allowed.contains(&call.skill) {
                errors.push(ValidationError::SkillNotAvailable {
                    skill: call.skill.clone(),
                    agent,
                });
            }
            for a in &call.args {
                if !constants.contains(a) {
                    errors.push(ValidationError::UnknownConstant(a.clone()));
                }
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }
}

/// Parses with the builtin skill table.
pub fn parse_skill_program(text: &str) -> Result<SkillProgram, CodegenError> {
    static TABLE: LazyLock<SkillTable> = LazyLock::new(SkillTable::default);
    TABLE.parse_program(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stir_program_with_skipped_line() {
        let p = parse_skill_program(
            "from robot_utils import <robot_api>\n# pick_up_item(LADLE)  # already completed this action\nplace_item_at(POT)\nstir()\n",
        )
        .unwrap();
        assert_eq!(p.calls, vec![SkillCall::new("place_item_at", &["POT"]), SkillCall::new("stir", &[])]);
        assert_eq!(p.skipped, vec!["pick_up_item(LADLE)"]);
    }

    #[test]
    fn get_salt_program() {
        let p = parse_skill_program("go_to(PANTRY)\npick_up_item(SALT)\ngo_to(TABLE)\nplace_item_at(TABLE)").unwrap();
        assert_eq!(p.calls.len(), 4);
        assert_eq!(p.calls[1].to_string(), "pick_up_item(SALT)");
    }

    #[test]
    fn rejections() {
        assert!(matches!(
            parse_skill_program("for i in range(3): stir()"),
            Err(CodegenError::DisallowedConstruct { line: 1, .. })
        ));
        assert!(matches!(parse_skill_program("x = 1\nstir()"), Err(CodegenError::DisallowedConstruct { .. })));
        assert!(matches!(parse_skill_program("pour(go_to(X), POT)"), Err(CodegenError::DisallowedConstruct { .. })));
        assert!(matches!(parse_skill_program("stir()\nfly(PANTRY)"), Err(CodegenError::UnknownSkill { line: 2, .. })));
        assert!(matches!(
            parse_skill_program("pour(SALT)"),
            Err(CodegenError::ArityMismatch { expected: 2, found: 1, .. })
        ));
        assert_eq!(parse_skill_program("# just a note\n"), Err(CodegenError::NoSkills));
        assert_eq!(parse_skill_program(""), Err(CodegenError::NoSkills));
    }

    #[test]
    fn quoted_args_become_constants() {
        let p = parse_skill_program("pick_up_item('ladle')\npour(\"can of corn\", pot)").unwrap();
        assert_eq!(p.calls[0].args, vec!["LADLE"]);
        assert_eq!(p.calls[1].args, vec!["CAN_OF_CORN", "POT"]);
        assert_eq!(p.calls[0].completed_text(), "pick_up_item('LADLE')");
    }

    #[test]
    fn validation_per_agent() {
        let t = SkillTable::default();
        let consts: BTreeSet<String> = ["PANTRY", "TABLE", "SALT", "POT"].iter().map(|s| s.to_string()).collect();
        let r2 = t.parse_program("go_to(PANTRY)\npick_up_item(SALT)\ngo_to(TABLE)\nplace_item_at(TABLE)").unwrap();
        assert_eq!(t.validate_program(&r2, Agent::R2, &consts), Ok(()));
        let errs = t.validate_program(&r2, Agent::R1, &consts).unwrap_err();
        assert!(errs.contains(&ValidationError::SkillNotAvailable {
            skill: "go_to".into(),
            agent: Agent::R1
        }));
        let bad = SkillProgram {
            calls: vec![SkillCall::new("pour", &["SALT"]), SkillCall::new("stir", &[])],
            skipped: vec![],
        };
        let errs = t.validate_program(&bad, Agent::R1, &consts).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert!(matches!(errs[0], ValidationError::ArityMismatch { .. }));
        let unknown = t.parse_program("pick_up_item(GOLD)").unwrap();
        assert_eq!(
            t.validate_program(&unknown, Agent::R1, &consts),
            Err(vec![ValidationError::UnknownConstant("GOLD".into())])
        );
    }

    #[test]
    fn bad_table_is_rejected() {
        let e = SkillTable::from_toml("[skills]\nstir = 0\n[agents]\nR1 = [\"fly\"]\n").unwrap_err();
        assert!(matches!(e, SkillTableError::UnknownSkill { .. }));
    }
}
