use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use sous_core::llm::{BackendSpec, LlmBackend};
use sous_core::recipe::RecipeBook;
use sous_core::runtime::{FaultConfig, WorldConfig};

use crate::Common;

/// Why a command stopped, mapped to the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// The scenario ran but did not succeed.
    Scenario(String),
    /// Bad flags, missing files or unreadable assets.
    Config(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Scenario(_) => 1,
            Failure::Config(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Scenario(m) | Failure::Config(m) => f.write_str(m),
        }
    }
}

pub fn config_err(e: impl fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

pub fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Config(format!("{}: {e}", path.display()))
}

fn require(p: &Path) -> Result<(), Failure> {
    if p.exists() {
        Ok(())
    } else {
        Err(Failure::Config(format!("{}: file not found", p.display())))
    }
}

pub fn load_book(dir: Option<&Path>) -> Result<RecipeBook, Failure> {
    match dir {
        Some(d) => {
            require(d)?;
            RecipeBook::load_dir(d).map_err(config_err)
        }
        None => Ok(RecipeBook::builtin()),
    }
}

/// Resolves `recipe` as a file (added to the book) or as a recipe name.
pub fn resolve_recipe(book: &mut RecipeBook, recipe: &str) -> Result<String, Failure> {
    let path = Path::new(recipe);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let before = book.names();
        book.add_text(recipe, &text).map_err(config_err)?;
        let added = book.names().into_iter().find(|n| !before.contains(n));
        return added.ok_or_else(|| Failure::Config(format!("{recipe}: recipe already in the book")));
    }
    book.get(recipe)
        .map(|d| d.recipe_name().to_string())
        .ok_or_else(|| Failure::Config(format!("unknown recipe `{recipe}` (known: {})", book.names().join(", "))))
}

pub fn load_world(p: Option<&Path>) -> Result<WorldConfig, Failure> {
    match p {
        Some(p) => {
            require(p)?;
            WorldConfig::load(p).map_err(config_err)
        }
        None => Ok(WorldConfig::default()),
    }
}

pub fn load_faults(p: Option<&Path>) -> Result<FaultConfig, Failure> {
    match p {
        Some(p) => {
            require(p)?;
            FaultConfig::load(p).map_err(config_err)
        }
        None => Ok(FaultConfig::none()),
    }
}

pub fn build_backend(c: &Common, book: &Arc<RecipeBook>) -> Result<Arc<dyn LlmBackend>, Failure> {
    if let Some(p) = &c.backend_file {
        require(p)?;
    }
    BackendSpec {
        kind: c.backend,
        path: c.backend_file.clone(),
    }
    .build(book.clone())
    .map_err(config_err)
}

pub fn create_out(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

pub fn write(path: PathBuf, text: &str) -> Result<(), Failure> {
    std::fs::write(&path, text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}
