//! Scenario transcripts: one JSON object per line, self-contained enough for
//! the violation checker and the scorer to run offline.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::persona::Mode;
use crate::phrases::Intent;
use crate::planner::{Agent, HighLevelAction, NodeRecord, PlannerKind};
use crate::runtime::RuntimeEvent;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    Header {
        recipe: String,
        planner: PlannerKind,
        seed: u64,
        persona: String,
    },
    UserTurn {
        turn: usize,
        text: String,
        /// What the planner received after transcription.
        heard: String,
        intents: Vec<Intent>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        injection: Option<Mode>,
    },
    Tick {
        tick_id: usize,
        /// Index of the latest user turn at tick time, if any.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        turn: Option<usize>,
        node_path: Vec<String>,
        raw_llm_io: Vec<NodeRecord>,
        actions: Vec<HighLevelAction>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        rejected: Vec<String>,
        observation_hash: String,
    },
    TickError {
        tick_id: usize,
        error: String,
    },
    Runtime {
        event: RuntimeEvent,
    },
    End {
        finished: bool,
        reason: EndReason,
        turns: usize,
        ticks: usize,
        steps: u64,
        recipe: String,
        completed: Vec<String>,
        recipe_nodes: usize,
        recipe_done: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    Finished,
    TurnBudgetExceeded,
    StepBudgetExceeded,
    Stalled,
}

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("transcript: {0}")]
    Io(#[from] std::io::Error),
    #[error("transcript line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub records: Vec<Record>,
}

impl Transcript {
    pub fn push(&mut self, r: Record) {
        self.records.push(r);
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TranscriptError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(line).map_err(|source| TranscriptError::Json { line: i + 1, source })?);
        }
        Ok(Transcript { records })
    }

    pub fn load(path: &Path) -> Result<Self, TranscriptError> {
        Self::from_jsonl(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), TranscriptError> {
        std::fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    pub fn end(&self) -> Option<&Record> {
        self.records.iter().rev().find(|r| matches!(r, Record::End { .. }))
    }

    pub fn finished(&self) -> bool {
        matches!(self.end(), Some(Record::End { finished: true, .. }))
    }

    /// Share of the recipe's subtasks done at the end.
    pub fn completion_rate(&self) -> f64 {
        match self.end() {
            Some(Record::End {
                recipe_nodes, recipe_done, ..
            }) if *recipe_nodes > 0 => *recipe_done as f64 / *recipe_nodes as f64,
            _ => 0.0,
        }
    }

    pub fn ticks(&self) -> impl Iterator<Item = (usize, &Record)> {
        self.records.iter().enumerate().filter(|(_, r)| matches!(r, Record::Tick { .. }))
    }

    /// Final recipe name set by the planner.
    pub fn final_recipe(&self) -> Option<String> {
        match self.end() {
            Some(Record::End { recipe, .. }) => Some(recipe.clone()),
            _ => None,
        }
    }

    /// All assigns in record order, flattened to (record index, agent, label).
    pub fn assigns(&self) -> Vec<(usize, Agent, String)> {
        let mut out = Vec::new();
        for (i, r) in self.ticks() {
            if let Record::Tick { actions, .. } = r {
                for a in actions {
                    if let HighLevelAction::Assign { agent, subtasks } = a {
                        for s in subtasks {
                            out.push((i, *agent, s.clone()));
                        }
                    }
                }
            }
        }
        out
    }
}
