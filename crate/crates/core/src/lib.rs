//! Interactive multi-robot cooking task planner.

pub mod eval;
pub mod llm;
pub mod phrases;
pub mod planner;
pub mod prompts;
pub mod recipe;
pub mod runtime;
pub mod skills;
