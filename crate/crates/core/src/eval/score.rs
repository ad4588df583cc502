//! Pass/fail scoring of injected non-nominal requests.

use serde::{Deserialize, Serialize};

use super::persona::{Mode, PersonaScript};
use super::transcript::{Record, Transcript};
use crate::phrases::{normalize_label, Intent};
use crate::planner::{CapabilityTable, HighLevelAction};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitTestResult {
    pub mode: Mode,
    /// Record index of the injected turn, None when it was never delivered.
    pub record: Option<usize>,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub results: Vec<UnitTestResult>,
}

impl Score {
    pub fn passed(&self) -> usize {
        self.results.iter().filter(|r| r.passed).count()
    }

    pub fn total(&self) -> usize {
        self.results.len()
    }

    /// 1.0 when nothing was injected.
    pub fn pass_rate(&self) -> f64 {
        if self.results.is_empty() {
            1.0
        } else {
            self.passed() as f64 / self.total() as f64
        }
    }
}

fn same_subtask(a: &str, b: &str) -> bool {
    let (a, b) = (normalize_label(a), normalize_label(b));
    !a.is_empty() && !b.is_empty() && (a.contains(&b) || b.contains(&a))
}

fn first_tick_after(t: &Transcript, i: usize) -> Option<&[HighLevelAction]> {
    t.records[i + 1..].iter().find_map(|r| match r {
        Record::Tick { actions, .. } => Some(actions.as_slice()),
        Record::UserTurn { .. } => Some(&[][..]),
        _ => None,
    })
}

/// Scores every planned injection of `persona`. Injections the run never
/// delivered count as failures.
pub fn score_unit_tests(t: &Transcript, persona: &PersonaScript, caps: &CapabilityTable) -> Score {
    let mut results = Vec::new();
    let mut delivered: Vec<(usize, Mode, &[Intent])> = t
        .records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| match r {
            Record::UserTurn {
                injection: Some(m),
                intents,
                ..
            } => Some((i, *m, intents.as_slice())),
            _ => None,
        })
        .collect();
    let assigns = t.assigns();
    let final_recipe = t.final_recipe().unwrap_or_default();

    for inj in &persona.injections {
        let Some(pos) = delivered.iter().position(|(_, m, _)| *m == inj.mode) else {
            results.push(UnitTestResult {
                mode: inj.mode,
                record: None,
                passed: false,
                detail: "never delivered".into(),
            });
            continue;
        };
        let (i, mode, intents) = delivered.remove(pos);
        let (passed, detail) = match mode {
            Mode::A | Mode::B => {
                let answer = first_tick_after(t, i).unwrap_or(&[]);
                let replied = answer.iter().any(|a| matches!(a, HighLevelAction::Say { .. }));
                let premature = answer.iter().any(|a| matches!(a, HighLevelAction::SetRecipe { .. }));
                let right = final_recipe == persona.recipe;
                let passed = replied && !premature && right;
                let detail = if !replied {
                    "no reply".to_string()
                } else if premature {
                    "set a recipe without confirmation".to_string()
                } else if !right {
                    format!("ended on `{final_recipe}`")
                } else {
                    "clarified".to_string()
                };
                (passed, detail)
            }
            Mode::C | Mode::D => {
                let Some((subtask, agent)) = intents.iter().find_map(Intent::request) else {
                    results.push(UnitTestResult {
                        mode,
                        record: Some(i),
                        passed: false,
                        detail: "injected turn carries no request".into(),
                    });
                    continue;
                };
                let first = assigns.iter().find(|(r, _, l)| *r > i && same_subtask(l, subtask));
                match (mode, first) {
                    (_, None) => (false, format!("`{subtask}` never assigned")),
                    (Mode::C, Some((_, a, _))) => (*a == agent, format!("`{subtask}` assigned to {a}")),
                    (_, Some((_, a, l))) => (caps.can(*a, l), format!("`{l}` assigned to {a}")),
                }
            }
        };
        results.push(UnitTestResult {
            mode,
            record: Some(i),
            passed,
            detail,
        });
    }
    Score { results }
}
