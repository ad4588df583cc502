use serde::Serialize;
use sous_core::recipe::{parse_nested_list, RecipeBook, RecipeDag};

use crate::common::{config_err, create_out, io_err, write, Failure};
use crate::DagArgs;

#[derive(Serialize)]
struct Dump<'a> {
    recipe: &'a str,
    nodes: Vec<Node<'a>>,
    edges: Vec<[&'a str; 2]>,
    frontier: Vec<&'a str>,
    topological_order: Vec<&'a str>,
}

#[derive(Serialize)]
struct Node<'a> {
    id: &'a str,
    label: &'a str,
}

fn dump(dag: &RecipeDag) -> Dump<'_> {
    let mut edges: Vec<[&str; 2]> = dag.edges().map(|(a, b)| [a, b]).collect();
    edges.sort();
    Dump {
        recipe: dag.recipe_name(),
        nodes: dag.nodes().iter().map(|n| Node { id: &n.id, label: &n.label }).collect(),
        edges,
        frontier: dag.available_subtasks(),
        topological_order: dag.topological_order(),
    }
}

fn summary(d: &Dump) -> String {
    let mut s = format!("recipe: {}\nnodes: {}\n", d.recipe, d.nodes.len());
    for n in &d.nodes {
        s.push_str(&format!("  {}\n", n.id));
    }
    s.push_str(&format!("edges: {}\n", d.edges.len()));
    for [a, b] in &d.edges {
        s.push_str(&format!("  {a} -> {b}\n"));
    }
    s.push_str(&format!("frontier: {}\n", d.frontier.len()));
    for f in &d.frontier {
        s.push_str(&format!("  {f}\n"));
    }
    s
}

pub fn cmd_dag(a: &DagArgs) -> Result<(), Failure> {
    let dag = match (&a.path, &a.recipe) {
        (Some(p), _) => {
            let text = std::fs::read_to_string(p).map_err(io_err(p))?;
            parse_nested_list(&text).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?
        }
        (None, Some(name)) => RecipeBook::builtin()
            .get(name)
            .cloned()
            .ok_or_else(|| config_err(format!("unknown recipe `{name}`")))?,
        (None, None) => return Err(Failure::Config("give a recipe file or --recipe".into())),
    };
    let d = dump(&dag);
    let json = serde_json::to_string_pretty(&d).expect("serializes") + "\n";
    if let Some(out) = &a.out {
        create_out(out)?;
        write(out.join("dag.json"), &json)?;
    }
    if a.json {
        print!("{json}");
    } else {
        print!("{}", summary(&d));
    }
    Ok(())
}
