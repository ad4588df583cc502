//! Nested-list recipe text to [`RecipeDag`] and back.
//!
//! An item at depth `k` depends on the contiguous run of items at depth
//! `k - 1` that immediately encloses it. Siblings at the same depth that sit
//! next to each other form a run, so a deeper item under three consecutive
//! siblings waits for all three.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::dag::{DagError, RecipeDag, Subtask};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: item is indented more than one level below the previous item")]
    IndentationJump { line: usize },
    #[error("line {line}: indentation is not a multiple of the {unit}-space indent unit")]
    MisalignedIndent { line: usize, unit: usize },
    #[error("line {line}: empty list item")]
    EmptyItem { line: usize },
    #[error("line {line}: `{label}` repeats a sibling in the same block")]
    DuplicateLabel { line: usize, label: String },
    #[error("recipe text contains no list items")]
    EmptyRecipe,
    #[error(transparent)]
    Dag(#[from] DagError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RenderError {
    #[error("subtask `{0}` depends on nodes that cannot be expressed by nesting")]
    NotExpressible(String),
}

const TAB_WIDTH: usize = 4;
const LIST_HEADER: &str = "subtasks as nested list";

struct Bullet {
    line: usize,
    indent: usize,
    label: String,
}

fn leading_width(s: &str) -> (usize, &str) {
    let mut width = 0;
    for (i, c) in s.char_indices() {
        match c {
            ' ' => width += 1,
            '\t' => width += TAB_WIDTH,
            _ => return (width, &s[i..]),
        }
    }
    (width, "")
}

fn bullet_body(rest: &str) -> Option<&str> {
    let mut chars = rest.chars();
    let marker = chars.next()?;
    if !matches!(marker, '-' | '*' | '+') {
        return None;
    }
    let body = &rest[1..];
    if body.is_empty() {
        return Some("");
    }
    if body.starts_with([' ', '\t']) {
        Some(body)
    } else {
        None
    }
}

/// Reads an optional `recipe: <name>` header line.
pub fn header_name(text: &str) -> Option<String> {
    text.lines().find_map(|l| {
        let t = l.trim();
        let (key, value) = t.split_once(':')?;
        if key.trim().eq_ignore_ascii_case("recipe") && !value.trim().is_empty() {
            Some(value.trim().to_string())
        } else {
            None
        }
    })
}

fn collect_bullets(text: &str) -> Result<Vec<Bullet>, ParseError> {
    let lines: Vec<&str> = text.lines().collect();
    // Generated recipes may carry prose sections before the list itself.
    let start = lines
        .iter()
        .position(|l| {
            let t = l.trim();
            t.starts_with('#') && t.trim_start_matches('#').trim().to_lowercase().starts_with(LIST_HEADER)
        })
        .map(|i| i + 1)
        .unwrap_or(0);

    let mut out = Vec::new();
    for (i, raw) in lines.iter().enumerate().skip(start) {
        let (indent, rest) = leading_width(raw);
        let Some(body) = bullet_body(rest) else {
            continue;
        };
        let label = body.trim();
        if label.is_empty() {
            return Err(ParseError::EmptyItem { line: i + 1 });
        }
        out.push(Bullet {
            line: i + 1,
            indent,
            label: label.to_string(),
        });
    }
    Ok(out)
}

/// Parses nested-list text. The recipe name comes from a `recipe:` header
/// when present and is empty otherwise.
pub fn parse_nested_list(text: &str) -> Result<RecipeDag, ParseError> {
    let bullets = collect_bullets(text)?;
    if bullets.is_empty() {
        return Err(ParseError::EmptyRecipe);
    }
    let base = bullets.iter().map(|b| b.indent).min().unwrap_or(0);
    let unit = bullets
        .iter()
        .map(|b| b.indent - base)
        .filter(|&w| w > 0)
        .min()
        .unwrap_or(1);

    let mut nodes: Vec<Subtask> = Vec::with_capacity(bullets.len());
    let mut edges: Vec<(String, String)> = Vec::new();
    let mut occurrences: BTreeMap<String, usize> = BTreeMap::new();
    // runs[d]: indices of the contiguous run of items currently open at depth d.
    let mut runs: Vec<Vec<usize>> = Vec::new();
    // block_labels[d]: labels seen in the enclosing block at depth d.
    let mut block_labels: Vec<BTreeSet<String>> = Vec::new();
    let mut prev_depth: Option<usize> = None;

    for b in &bullets {
        let offset = b.indent - base;
        if offset % unit != 0 {
            return Err(ParseError::MisalignedIndent { line: b.line, unit });
        }
        let depth = offset / unit;
        let jump = match prev_depth {
            None => depth != 0,
            Some(p) => depth > p + 1,
        };
        if jump || (depth > 0 && runs.get(depth - 1).is_none_or(|r| r.is_empty())) {
            return Err(ParseError::IndentationJump { line: b.line });
        }

        let entering = prev_depth.is_none_or(|p| depth > p);
        block_labels.truncate(depth + 1);
        if entering || block_labels.len() <= depth {
            block_labels.resize_with(depth + 1, BTreeSet::new);
            block_labels[depth].clear();
        }
        if !block_labels[depth].insert(b.label.clone()) {
            return Err(ParseError::DuplicateLabel {
                line: b.line,
                label: b.label.clone(),
            });
        }

        let count = occurrences.entry(b.label.clone()).or_insert(0);
        *count += 1;
        let id = if *count == 1 {
            b.label.clone()
        } else {
            format!("{}#{}", b.label, count)
        };
        let idx = nodes.len();
        nodes.push(Subtask::new(id.clone(), b.label.clone()));

        if depth > 0 {
            for &p in &runs[depth - 1] {
                edges.push((nodes[p].id.clone(), id.clone()));
            }
        }
        let extends = prev_depth == Some(depth);
        runs.truncate(depth + 1);
        if extends && runs.len() == depth + 1 {
            runs[depth].push(idx);
        } else {
            runs.resize_with(depth + 1, Vec::new);
            runs[depth] = vec![idx];
        }
        prev_depth = Some(depth);
    }

    let name = header_name(text).unwrap_or_default();
    Ok(RecipeDag::new(name, nodes, edges)?)
}

/// Renders a graph as nested-list text that parses back to the same graph.
/// Fails for graphs whose edges cannot be expressed by nesting.
pub fn render_nested_list(dag: &RecipeDag) -> Result<String, RenderError> {
    const MARKERS: [char; 3] = ['-', '*', '+'];
    let depths = dag.depths();
    let mut out = String::new();
    if !dag.recipe_name().is_empty() {
        out.push_str("recipe: ");
        out.push_str(dag.recipe_name());
        out.push('\n');
    }
    for (i, n) in dag.nodes().iter().enumerate() {
        let d = depths[i];
        out.push_str(&" ".repeat(d * TAB_WIDTH));
        out.push(MARKERS[d % MARKERS.len()]);
        out.push(' ');
        out.push_str(&n.label);
        out.push('\n');
    }

    let back = parse_nested_list(&out).map_err(|_| first_node_error(dag))?;
    let same_ids = back
        .nodes()
        .iter()
        .zip(dag.nodes())
        .all(|(a, b)| a.id == b.id)
        && back.len() == dag.len();
    let want: BTreeSet<(&str, &str)> = dag.edges().collect();
    let got: BTreeSet<(&str, &str)> = back.edges().collect();
    if !same_ids || want != got {
        let bad = dag
            .nodes()
            .iter()
            .find(|n| {
                let w: BTreeSet<_> = dag.parents(&n.id).unwrap_or_default().into_iter().collect();
                let g: BTreeSet<_> = back.parents(&n.id).unwrap_or_default().into_iter().collect();
                w != g
            })
            .map(|n| n.id.clone())
            .unwrap_or_else(|| dag.nodes()[0].id.clone());
        return Err(RenderError::NotExpressible(bad));
    }
    Ok(out)
}

fn first_node_error(dag: &RecipeDag) -> RenderError {
    RenderError::NotExpressible(dag.nodes().first().map(|n| n.id.clone()).unwrap_or_default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn caesar_salad_shape() {
        let text = "recipe: Caesar Salad
- Prepare lettuce
    * Put lettuce into bowl
- Get pepper
    * Pour pepper into bowl
- Get ranch sauce
    * Pour ranch sauce into bowl
        + Mix bowl
";
        let d = parse_nested_list(text).unwrap();
        assert_eq!(d.recipe_name(), "Caesar Salad");
        assert_eq!(d.len(), 7);
        assert_eq!(
            d.available_subtasks(),
            vec!["Prepare lettuce", "Get pepper", "Get ranch sauce"]
        );
        assert_eq!(d.parents("Mix bowl").unwrap(), vec!["Pour ranch sauce into bowl"]);
        assert_eq!(d.parents("Pour pepper into bowl").unwrap(), vec!["Get pepper"]);
    }

    #[test]
    fn sibling_runs_join() {
        let d = parse_nested_list("- a\n- b\n  - c\n  - d\n    - e\n").unwrap();
        let mut pc = d.parents("c").unwrap();
        pc.sort();
        assert_eq!(pc, vec!["a", "b"]);
        let mut pe = d.parents("e").unwrap();
        pe.sort();
        assert_eq!(pe, vec!["c", "d"]);
    }

    #[test]
    fn tabs_count_as_four_spaces() {
        let d = parse_nested_list("- a\n\t- b\n    - c\n").unwrap();
        let mut pc = d.parents("c").unwrap();
        pc.sort();
        assert_eq!(d.parents("b").unwrap(), vec!["a"]);
        assert_eq!(pc, vec!["a"]);
        assert_eq!(d.edge_count(), 2);
    }

    #[test]
    fn indentation_jump_is_rejected() {
        let err = parse_nested_list("- a\n        - b\n    - c\n").unwrap_err();
        assert_eq!(err, ParseError::IndentationJump { line: 2 });
        let err = parse_nested_list("    - a\n- b\n").unwrap_err();
        assert_eq!(err, ParseError::IndentationJump { line: 1 });
    }

    #[test]
    fn misaligned_indent_is_rejected() {
        let err = parse_nested_list("- a\n  - b\n   - c\n").unwrap_err();
        assert_eq!(err, ParseError::MisalignedIndent { line: 3, unit: 2 });
    }

    #[test]
    fn empty_inputs() {
        assert_eq!(parse_nested_list("just prose\n").unwrap_err(), ParseError::EmptyRecipe);
        assert_eq!(parse_nested_list("- a\n-   \n").unwrap_err(), ParseError::EmptyItem { line: 2 });
    }

    #[test]
    fn duplicate_labels_across_scopes_get_suffixes() {
        let d = parse_nested_list("- a\n    - stir\n- b\n    - stir\n").unwrap();
        assert!(d.contains("stir"));
        assert!(d.contains("stir#2"));
        assert_eq!(d.node("stir#2").unwrap().label, "stir");
        assert_eq!(d.parents("stir#2").unwrap(), vec!["b"]);
    }

    #[test]
    fn duplicate_labels_in_one_block_are_rejected() {
        let err = parse_nested_list("- a\n    - x\n    - x\n").unwrap_err();
        assert_eq!(
            err,
            ParseError::DuplicateLabel {
                line: 3,
                label: "x".into()
            }
        );
        // Same depth but separated by a shallower item: different blocks.
        assert!(parse_nested_list("- a\n    - x\n- b\n    - x\n").is_ok());
    }

    #[test]
    fn list_header_skips_prose_bullets() {
        let text = "# Identify Subtasks\n- not a node\n# Subtasks as nested list\n- real\n    * child\n";
        let d = parse_nested_list(text).unwrap();
        assert_eq!(d.len(), 2);
        assert!(d.contains("real"));
    }

    #[test]
    fn ignores_non_bullet_lines_and_horizontal_rules() {
        let d = parse_nested_list("intro\n- a\n---\n-b\n  - c\n").unwrap();
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn render_round_trips() {
        let text = "recipe: T\n- a\n- b\n    * c\n    * d\n        + e\n- f\n";
        let d = parse_nested_list(text).unwrap();
        let r = render_nested_list(&d).unwrap();
        let back = parse_nested_list(&r).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn render_rejects_non_nested_shapes() {
        // c depends on a only, but a and b are adjacent roots.
        let d = RecipeDag::new(
            "t",
            vec![Subtask::new("a", "a"), Subtask::new("b", "b"), Subtask::new("c", "c")],
            [("a", "c")],
        )
        .unwrap();
        assert!(matches!(render_nested_list(&d), Err(RenderError::NotExpressible(_))));
    }
}
