//! Recipe graphs: parsing, bookkeeping of done subtasks, and rendering.

mod book;
mod dag;
mod parse;

pub use book::{normalize_name, BookError, RecipeBook};
pub use dag::{DagError, MarkOutcome, RecipeDag, Subtask};
pub use parse::{header_name, parse_nested_list, render_nested_list, ParseError, RenderError};
