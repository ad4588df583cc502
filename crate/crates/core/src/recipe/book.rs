//! Named collection of recipe graphs.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use super::dag::RecipeDag;
use super::parse::{parse_nested_list, ParseError};

#[derive(Debug, Error)]
pub enum BookError {
    #[error("{path}: {source}")]
    Parse { path: String, source: ParseError },
    #[error("{0}: recipe file has no `recipe:` header")]
    MissingName(String),
    #[error("{0}: recipe name is already taken")]
    DuplicateRecipe(String),
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

const BUILTIN: &[(&str, &str)] = &[
    ("avocado_toast.md", include_str!("../../assets/recipes/avocado_toast.md")),
    ("bibimbap.md", include_str!("../../assets/recipes/bibimbap.md")),
    ("caesar_salad.md", include_str!("../../assets/recipes/caesar_salad.md")),
    ("chicken_noodle_soup.md", include_str!("../../assets/recipes/chicken_noodle_soup.md")),
    ("corn_soup.md", include_str!("../../assets/recipes/corn_soup.md")),
    ("pasta_salad.md", include_str!("../../assets/recipes/pasta_salad.md")),
    ("sundae.md", include_str!("../../assets/recipes/sundae.md")),
    ("tossed_salad.md", include_str!("../../assets/recipes/tossed_salad.md")),
    ("turkey_sandwich.md", include_str!("../../assets/recipes/turkey_sandwich.md")),
];

/// Lowercases, drops punctuation and collapses whitespace so that
/// "caesar salad!" finds "Caesar Salad".
pub fn normalize_name(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_alphanumeric() { c.to_ascii_lowercase() } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Default)]
pub struct RecipeBook {
    recipes: BTreeMap<String, RecipeDag>,
}

impl RecipeBook {
    pub fn new() -> Self {
        Self::default()
    }

    /// The recipes shipped with the crate.
    pub fn builtin() -> Self {
        let mut book = RecipeBook::new();
        for (file, text) in BUILTIN {
            book.add_text(file, text).expect("builtin recipes are valid");
        }
        book
    }

    /// Loads every `.md` or `.txt` file in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, BookError> {
        let io = |source| BookError::Io {
            path: dir.display().to_string(),
            source,
        };
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("md" | "txt")))
            .collect();
        paths.sort();
        let mut book = RecipeBook::new();
        for p in paths {
            let text = std::fs::read_to_string(&p).map_err(|source| BookError::Io {
                path: p.display().to_string(),
                source,
            })?;
            book.add_text(&p.display().to_string(), &text)?;
        }
        Ok(book)
    }

    pub fn add_text(&mut self, origin: &str, text: &str) -> Result<(), BookError> {
        let dag = parse_nested_list(text).map_err(|source| BookError::Parse {
            path: origin.to_string(),
            source,
        })?;
        if dag.recipe_name().is_empty() {
            return Err(BookError::MissingName(origin.to_string()));
        }
        self.insert(dag)
    }

    pub fn insert(&mut self, dag: RecipeDag) -> Result<(), BookError> {
        let key = normalize_name(dag.recipe_name());
        if self.recipes.contains_key(&key) {
            return Err(BookError::DuplicateRecipe(dag.recipe_name().to_string()));
        }
        self.recipes.insert(key, dag);
        Ok(())
    }

    /// Case and punctuation insensitive lookup of a fresh (all undone) graph.
    pub fn get(&self, name: &str) -> Option<&RecipeDag> {
        self.recipes.get(&normalize_name(name))
    }

    /// Display names, sorted.
    pub fn names(&self) -> Vec<String> {
        self.recipes.values().map(|d| d.recipe_name().to_string()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &RecipeDag> {
        self.recipes.values()
    }

    pub fn len(&self) -> usize {
        self.recipes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recipes.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_book_loads() {
        let book = RecipeBook::builtin();
        assert_eq!(book.len(), BUILTIN.len());
        assert!(book.get("caesar salad").is_some());
        assert!(book.get("  Chicken noodle SOUP ").is_some());
        assert!(book.get("lasagna").is_none());
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let mut book = RecipeBook::new();
        book.add_text("a", "recipe: X\n- a\n").unwrap();
        assert!(matches!(
            book.add_text("b", "recipe: x\n- b\n"),
            Err(BookError::DuplicateRecipe(_))
        ));
        assert!(matches!(book.add_text("c", "- c\n"), Err(BookError::MissingName(_))));
    }
}
