//! Recipe dependency graph with per-node done flags.
//!
//! Nodes are subtasks, an edge `a -> b` means `b` may only start once `a` is
//! done. Only sequential and AND dependencies exist: a node becomes available
//! when every one of its parents is done. Parentless nodes hang off an
//! implicit, always-done root.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DagError {
    #[error("unknown subtask `{0}`")]
    UnknownSubtask(String),
    #[error("duplicate subtask id `{0}`")]
    DuplicateId(String),
    #[error("subtask `{0}` has an empty label")]
    EmptyLabel(String),
    #[error("edge `{from}` -> `{to}` references a missing node")]
    DanglingEdge { from: String, to: String },
    #[error("self edge on `{0}`")]
    SelfEdge(String),
    #[error("dependency cycle through `{0}`")]
    Cycle(String),
}

/// One unit of assignable work, e.g. "get pepper".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subtask {
    pub id: String,
    pub label: String,
    #[serde(default)]
    pub done: bool,
}

impl Subtask {
    pub fn new(id: impl Into<String>, label: impl Into<String>) -> Self {
        Subtask {
            id: id.into(),
            label: label.into(),
            done: false,
        }
    }
}

/// Result of flipping a done flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkOutcome {
    InOrder,
    /// Some parent was still undone. Allowed, users finish things early.
    OutOfOrder,
    AlreadyDone,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DagRepr {
    recipe_name: String,
    nodes: Vec<Subtask>,
    edges: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "DagRepr", into = "DagRepr")]
pub struct RecipeDag {
    recipe_name: String,
    nodes: Vec<Subtask>,
    index: BTreeMap<String, usize>,
    edges: BTreeSet<(usize, usize)>,
    parents: Vec<Vec<usize>>,
}

impl TryFrom<DagRepr> for RecipeDag {
    type Error = DagError;

    fn try_from(r: DagRepr) -> Result<Self, DagError> {
        RecipeDag::new(r.recipe_name, r.nodes, r.edges)
    }
}

impl From<RecipeDag> for DagRepr {
    fn from(d: RecipeDag) -> Self {
        let edges = d
            .edges()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        DagRepr {
            recipe_name: d.recipe_name,
            nodes: d.nodes,
            edges,
        }
    }
}

impl RecipeDag {
    /// Builds and validates a graph. Repeated edges collapse into one.
    pub fn new<I, S>(recipe_name: impl Into<String>, nodes: Vec<Subtask>, edges: I) -> Result<Self, DagError>
    where
        I: IntoIterator<Item = (S, S)>,
        S: AsRef<str>,
    {
        let mut index = BTreeMap::new();
        let mut cleaned = Vec::with_capacity(nodes.len());
        for (i, mut n) in nodes.into_iter().enumerate() {
            n.label = n.label.trim().to_string();
            if n.label.is_empty() {
                return Err(DagError::EmptyLabel(n.id));
            }
            if index.insert(n.id.clone(), i).is_some() {
                return Err(DagError::DuplicateId(n.id));
            }
            cleaned.push(n);
        }

        let mut edge_set = BTreeSet::new();
        for (from, to) in edges {
            let (from, to) = (from.as_ref(), to.as_ref());
            let (Some(&a), Some(&b)) = (index.get(from), index.get(to)) else {
                return Err(DagError::DanglingEdge {
                    from: from.to_string(),
                    to: to.to_string(),
                });
            };
            if a == b {
                return Err(DagError::SelfEdge(from.to_string()));
            }
            edge_set.insert((a, b));
        }

        let mut parents = vec![Vec::new(); cleaned.len()];
        for &(a, b) in &edge_set {
            parents[b].push(a);
        }

        let dag = RecipeDag {
            recipe_name: recipe_name.into(),
            nodes: cleaned,
            index,
            edges: edge_set,
            parents,
        };
        dag.topo_indices()?;
        Ok(dag)
    }

    pub fn recipe_name(&self) -> &str {
        &self.recipe_name
    }

    pub fn set_recipe_name(&mut self, name: impl Into<String>) {
        self.recipe_name = name.into();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes in insertion (document) order.
    pub fn nodes(&self) -> &[Subtask] {
        &self.nodes
    }

    pub fn node(&self, id: &str) -> Option<&Subtask> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> + '_ {
        self.edges
            .iter()
            .map(|&(a, b)| (self.nodes[a].id.as_str(), self.nodes[b].id.as_str()))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn parents(&self, id: &str) -> Result<Vec<&str>, DagError> {
        let &i = self
            .index
            .get(id)
            .ok_or_else(|| DagError::UnknownSubtask(id.to_string()))?;
        Ok(self.parents[i]
            .iter()
            .map(|&p| self.nodes[p].id.as_str())
            .collect())
    }

    pub fn is_done(&self, id: &str) -> Option<bool> {
        self.node(id).map(|n| n.done)
    }

    /// Undone subtasks whose parents are all done, in document order.
    pub fn available_subtasks(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(i, n)| !n.done && self.parents[*i].iter().all(|&p| self.nodes[p].done))
            .map(|(_, n)| n.id.as_str())
            .collect()
    }

    /// Returns a copy with `id` marked done.
    pub fn mark_done(&self, id: &str) -> Result<RecipeDag, DagError> {
        let mut next = self.clone();
        next.set_done(id)?;
        Ok(next)
    }

    /// In-place variant of [`RecipeDag::mark_done`]; idempotent.
    pub fn set_done(&mut self, id: &str) -> Result<MarkOutcome, DagError> {
        let &i = self
            .index
            .get(id)
            .ok_or_else(|| DagError::UnknownSubtask(id.to_string()))?;
        if self.nodes[i].done {
            return Ok(MarkOutcome::AlreadyDone);
        }
        let in_order = self.parents[i].iter().all(|&p| self.nodes[p].done);
        self.nodes[i].done = true;
        if in_order {
            Ok(MarkOutcome::InOrder)
        } else {
            tracing::warn!(subtask = id, recipe = %self.recipe_name, "subtask marked done before its dependencies");
            Ok(MarkOutcome::OutOfOrder)
        }
    }

    pub fn is_finished(&self) -> bool {
        self.nodes.iter().all(|n| n.done)
    }

    /// Clears every done flag.
    pub fn reset(&mut self) {
        for n in &mut self.nodes {
            n.done = false;
        }
    }

    pub fn topological_order(&self) -> Vec<&str> {
        self.topo_indices()
            .expect("validated at construction")
            .into_iter()
            .map(|i| self.nodes[i].id.as_str())
            .collect()
    }

    fn topo_indices(&self) -> Result<Vec<usize>, DagError> {
        let n = self.nodes.len();
        let mut indegree: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut children = vec![Vec::new(); n];
        for &(a, b) in &self.edges {
            children[a].push(b);
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = queue.pop_front() {
            order.push(i);
            for &c in &children[i] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        if order.len() != n {
            let stuck = (0..n).find(|&i| indegree[i] > 0).unwrap_or(0);
            return Err(DagError::Cycle(self.nodes[stuck].id.clone()));
        }
        Ok(order)
    }

    /// Depth of every node (roots are 0), used when rendering back to a list.
    pub(crate) fn depths(&self) -> Vec<usize> {
        let mut depth = vec![0usize; self.nodes.len()];
        for i in self.topo_indices().expect("validated at construction") {
            depth[i] = self.parents[i].iter().map(|&p| depth[p] + 1).max().unwrap_or(0);
        }
        depth
    }
}
