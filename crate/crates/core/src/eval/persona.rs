//! Scripted users. A persona pursues one target recipe, approves what the
//! planner proposes, does the subtasks handed to it, and at planned points
//! injects a non-nominal request.

use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phrases::{extract_proposals, user_text, Intent};
use crate::planner::{Agent, PlannerState, Speaker};
use crate::recipe::RecipeDag;
use crate::skills::object_constants;

/// Non-nominal interaction modes: A vague recipe, B nonexistent recipe,
/// C modified assignment, D subtask outside the recipe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Mode {
    A,
    B,
    C,
    D,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::A, Mode::B, Mode::C, Mode::D];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Nominal,
    Easy,
    Hard,
}

impl std::str::FromStr for Difficulty {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nominal" => Ok(Difficulty::Nominal),
            "easy" => Ok(Difficulty::Easy),
            "hard" => Ok(Difficulty::Hard),
            other => Err(format!("unknown persona difficulty `{other}`")),
        }
    }
}

/// One planned injection. A and B happen while the recipe is being chosen;
/// C and D happen at the `at`-th time the planner proposes something.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Injection {
    pub mode: Mode,
    #[serde(default)]
    pub at: usize,
    /// Hint for A, dish for B.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub words: Option<String>,
    /// Requested subtask and agent for D.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtask: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<Agent>,
}

impl Injection {
    pub fn new(mode: Mode) -> Self {
        Injection {
            mode,
            at: 0,
            words: None,
            subtask: None,
            agent: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaScript {
    pub name: String,
    pub recipe: String,
    #[serde(default, rename = "injection")]
    pub injections: Vec<Injection>,
}

#[derive(Debug, Error)]
pub enum PersonaError {
    #[error("persona file: {0}")]
    Io(#[from] std::io::Error),
    #[error("persona file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("mode {0:?} needs a subtask and an agent")]
    MissingRequest(Mode),
}

const DISHES: &[&str] = &["lasagna", "pad thai", "ramen", "tiramisu", "paella"];

/// Out-of-recipe requests used for mode D, all within some robot's skills.
const EXTRA_REQUESTS: &[(&str, Agent)] = &[
    ("get eggs", Agent::R2),
    ("hand over spoon", Agent::R1),
    ("get broccoli", Agent::R2),
];

/// An ingredient the recipe fetches, for a vague request.
fn hint_for(dag: &RecipeDag) -> String {
    dag.nodes()
        .iter()
        .flat_map(|n| object_constants(&n.id))
        .next()
        .map(|c| c.to_lowercase().replace('_', " "))
        .unwrap_or_else(|| dag.recipe_name().to_lowercase())
}

fn d_injection(at: usize, i: usize) -> Injection {
    let (subtask, agent) = EXTRA_REQUESTS[i % EXTRA_REQUESTS.len()];
    Injection {
        at,
        subtask: Some(subtask.into()),
        agent: Some(agent),
        ..Injection::new(Mode::D)
    }
}

fn filled(mode: Mode, dag: &RecipeDag, at: usize, rng: &mut ChaCha8Rng, d_index: usize) -> Injection {
    match mode {
        Mode::A => Injection {
            words: Some(hint_for(dag)),
            ..Injection::new(Mode::A)
        },
        Mode::B => Injection {
            words: Some(DISHES.choose(rng).expect("dishes").to_string()),
            ..Injection::new(Mode::B)
        },
        Mode::C => Injection { at, ..Injection::new(Mode::C) },
        Mode::D => d_injection(at, d_index),
    }
}

impl PersonaScript {
    pub fn nominal(dag: &RecipeDag) -> Self {
        PersonaScript {
            name: "nominal".into(),
            recipe: dag.recipe_name().into(),
            injections: Vec::new(),
        }
    }

    /// One injection with mode and timing drawn from `seed`.
    pub fn easy(dag: &RecipeDag, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mode = *Mode::ALL.choose(&mut rng).expect("modes");
        let at = rng.random_range(0..2);
        let d_index = rng.random_range(0..EXTRA_REQUESTS.len());
        PersonaScript {
            name: "easy".into(),
            recipe: dag.recipe_name().into(),
            injections: vec![filled(mode, dag, at, &mut rng, d_index)],
        }
    }

    /// Six injections: A, B, C, then three D.
    pub fn hard(dag: &RecipeDag, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let injections = vec![
            filled(Mode::A, dag, 0, &mut rng, 0),
            filled(Mode::B, dag, 0, &mut rng, 0),
            filled(Mode::C, dag, 0, &mut rng, 0),
            d_injection(1, 0),
            d_injection(2, 1),
            d_injection(3, 2),
        ];
        PersonaScript {
            name: "hard".into(),
            recipe: dag.recipe_name().into(),
            injections,
        }
    }

    pub fn for_difficulty(d: Difficulty, dag: &RecipeDag, seed: u64) -> Self {
        match d {
            Difficulty::Nominal => Self::nominal(dag),
            Difficulty::Easy => Self::easy(dag, seed),
            Difficulty::Hard => Self::hard(dag, seed),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, PersonaError> {
        let s: PersonaScript = toml::from_str(text)?;
        for inj in &s.injections {
            if inj.mode == Mode::D && (inj.subtask.is_none() || inj.agent.is_none()) {
                return Err(PersonaError::MissingRequest(Mode::D));
            }
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, PersonaError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("persona serializes")
    }
}

/// A persona turn: the text, its intent and the injection it carries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Turn {
    pub text: String,
    pub intent: Intent,
    pub injection: Option<Mode>,
}

impl Turn {
    fn plain(intent: Intent) -> Self {
        Turn {
            text: user_text(&intent),
            intent,
            injection: None,
        }
    }

    fn injected(intent: Intent, mode: Mode) -> Self {
        Turn {
            text: user_text(&intent),
            intent,
            injection: Some(mode),
        }
    }
}

pub struct Persona {
    script: PersonaScript,
    pending: Vec<Injection>,
    /// Chat length right after our last turn.
    answered: usize,
    opportunities: usize,
    spoke: bool,
}

impl Persona {
    pub fn new(script: PersonaScript) -> Self {
        Persona {
            pending: script.injections.clone(),
            script,
            answered: 0,
            opportunities: 0,
            spoke: false,
        }
    }

    pub fn script(&self) -> &PersonaScript {
        &self.script
    }

    /// Injections not delivered yet.
    pub fn pending(&self) -> &[Injection] {
        &self.pending
    }

    fn take(&mut self, pred: impl Fn(&Injection) -> bool) -> Option<Injection> {
        let i = self.pending.iter().position(pred)?;
        Some(self.pending.remove(i))
    }

    fn said(&mut self, state: &PlannerState, turn: Turn) -> Option<Turn> {
        self.answered = state.chat.len() + 1;
        self.spoke = true;
        Some(turn)
    }

    /// Next thing to say, or None to wait for the planner or the robots.
    pub fn next_turn(&mut self, state: &PlannerState) -> Option<Turn> {
        let fresh: Vec<&str> = state
            .chat
            .iter()
            .skip(self.answered)
            .filter(|e| e.speaker == Speaker::Planner)
            .map(|e| e.text.as_str())
            .collect();
        let replied = !fresh.is_empty();
        if state.recipe_name().is_empty() || state.recipe_name() != self.script.recipe {
            if self.spoke && !replied {
                return None;
            }
            if let Some(inj) = self.take(|i| matches!(i.mode, Mode::A | Mode::B)) {
                let words = inj.words.clone().unwrap_or_default();
                let intent = match inj.mode {
                    Mode::A => Intent::ProposeVague { hint: words },
                    _ => Intent::ProposeNonexistent { dish: words },
                };
                return self.said(state, Turn::injected(intent, inj.mode));
            }
            let intent = Intent::ProposeRecipe {
                name: self.script.recipe.clone(),
            };
            return self.said(state, Turn::plain(intent));
        }
        if let Some(label) = state.user_queue.first() {
            let intent = Intent::ReportDone { subtask: label.clone() };
            return self.said(state, Turn::plain(intent));
        }
        let proposals: Vec<(Agent, String)> = fresh.iter().flat_map(|t| extract_proposals(t)).collect();
        if proposals.is_empty() {
            return None;
        }
        let n = self.opportunities;
        self.opportunities += 1;
        let robot_label = proposals.iter().find(|(a, _)| a.is_robot()).map(|(_, l)| l.clone());
        let due = self
            .pending
            .iter()
            .position(|i| matches!(i.mode, Mode::C | Mode::D) && i.at <= n && (i.mode == Mode::D || robot_label.is_some()));
        if let Some(idx) = due {
            let inj = self.pending.remove(idx);
            let intent = match inj.mode {
                Mode::C => Intent::Reassign {
                    subtask: robot_label.expect("checked above").to_lowercase(),
                    agent: Agent::User,
                },
                _ => Intent::AddSubtask {
                    subtask: inj.subtask.clone().expect("validated"),
                    agent: inj.agent.expect("validated"),
                },
            };
            return self.said(state, Turn::injected(intent, inj.mode));
        }
        self.said(state, Turn::plain(Intent::Approve))
    }

    /// A nudge for when nothing is moving.
    pub fn nudge(&mut self, state: &PlannerState) -> Turn {
        self.answered = state.chat.len() + 1;
        Turn {
            text: "What should we do next?".into(),
            intent: Intent::Smalltalk,
            injection: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recipe::RecipeBook;

    fn dag(name: &str) -> RecipeDag {
        RecipeBook::builtin().get(name).unwrap().clone()
    }

    #[test]
    fn plans_have_required_injection_counts() {
        for seed in 0..20 {
            assert_eq!(PersonaScript::easy(&dag("Tossed Salad"), seed).injections.len(), 1);
            let hard = PersonaScript::hard(&dag("Tossed Salad"), seed);
            let modes: Vec<Mode> = hard.injections.iter().map(|i| i.mode).collect();
            assert_eq!(modes, [Mode::A, Mode::B, Mode::C, Mode::D, Mode::D, Mode::D]);
        }
        let easy_modes: std::collections::BTreeSet<Mode> =
            (0..40).map(|s| PersonaScript::easy(&dag("Sundae"), s).injections[0].mode).collect();
        assert_eq!(easy_modes.len(), 4);
        assert_eq!(hint_for(&dag("Caesar Salad")), "pepper");
    }

    #[test]
    fn toml_round_trip() {
        let p = PersonaScript::hard(&dag("Bibimbap"), 3);
        assert_eq!(PersonaScript::from_toml(&p.to_toml()).unwrap(), p);
        assert!(matches!(
            PersonaScript::from_toml("name = \"x\"\nrecipe = \"Sundae\"\n[[injection]]\nmode = \"D\"\n"),
            Err(PersonaError::MissingRequest(Mode::D))
        ));
    }

    #[test]
    fn proposes_recipe_then_waits() {
        let mut p = Persona::new(PersonaScript::nominal(&dag("Tossed Salad")));
        let mut state = PlannerState::new();
        let t = p.next_turn(&state).unwrap();
        assert_eq!(t.text, "Let's make Tossed Salad!");
        state.user_says(&t.text);
        assert_eq!(p.next_turn(&state), None);
    }
}
