//! Seeded wrapper that corrupts planner responses at a fixed rate.

use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CompletionRequest, LlmBackend, LlmError, CODEGEN_NODE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Corruption {
    /// Prose with no JSON object.
    ProseOnly,
    /// Response cut in half, leaving unbalanced braces.
    Truncated,
    /// Object without the keys the node requires.
    MissingKeys,
    /// Decision outside every node's allowed set.
    InvalidDecision,
}

impl Corruption {
    pub const ALL: [Corruption; 4] = [
        Corruption::ProseOnly,
        Corruption::Truncated,
        Corruption::MissingKeys,
        Corruption::InvalidDecision,
    ];

    pub fn apply(self, text: &str) -> String {
        match self {
            Corruption::ProseOnly => "I think the robots should keep going with the recipe.".to_string(),
            Corruption::Truncated => {
                let cut = text.find('{').map(|i| i + (text.len() - i) / 2).unwrap_or(0);
                let mut end = cut.max(1).min(text.len());
                while !text.is_char_boundary(end) {
                    end -= 1;
                }
                let t = &text[..end];
                if t.contains('{') { t.to_string() } else { "{".to_string() }
            }
            Corruption::MissingKeys => "{\"reasoning\": \"not sure\"}".to_string(),
            Corruption::InvalidDecision => "{\"reasoning\": \"coffee first\", \"decision\": \"Make_Coffee\"}".to_string(),
        }
    }
}

/// Corrupts each planner call independently with probability `rate`. Code
/// generation calls pass through untouched.
pub struct SloppyBackend<B> {
    inner: B,
    rate: f64,
    rng: Mutex<ChaCha8Rng>,
    corrupted: Mutex<usize>,
}

impl<B: LlmBackend> SloppyBackend<B> {
    pub fn new(inner: B, rate: f64, seed: u64) -> Self {
        SloppyBackend {
            inner,
            rate: rate.clamp(0.0, 1.0),
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
            corrupted: Mutex::new(0),
        }
    }

    pub fn corrupted_count(&self) -> usize {
        *self.corrupted.lock().expect("counter poisoned")
    }
}

impl<B: LlmBackend> LlmBackend for SloppyBackend<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        let text = self.inner.complete(request)?;
        if request.node_name == CODEGEN_NODE {
            return Ok(text);
        }
        let mut rng = self.rng.lock().expect("rng poisoned");
        if rng.random::<f64>() < self.rate {
            let kind = Corruption::ALL[rng.random_range(0..Corruption::ALL.len())];
            *self.corrupted.lock().expect("counter poisoned") += 1;
            return Ok(kind.apply(&text));
        }
        Ok(text)
    }
}
