//! Typed, undirected, simple graphs.
//!
//! A [`HetGraph`] stores dense node ids `0..n`, a node-type index per node and
//! a canonical edge list (`u < v`, no parallel edges, no self-loops). Each edge
//! carries an edge-type index into the graph's [`TypeSchema`].

mod io;
mod synth;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

pub use io::{load_graph, load_graph_like, save_graph};
pub use synth::{synth_hetero_graph, synth_preset, SynthParams};

/// Node-type and edge-type vocabularies of a heterogeneous graph.
///
/// Indices are positions in the label lists. The index equal to the number of
/// node types is reserved as the end-of-sequence marker used by walk
/// generation; no node may carry it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeSchema {
    node_types: Vec<String>,
    edge_types: Vec<String>,
    edge_type_rule: Option<BTreeMap<(usize, usize), usize>>,
}

fn unordered(a: usize, b: usize) -> (usize, usize) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn check_unique(kind: &str, labels: &[String]) -> Result<()> {
    let mut seen = HashMap::new();
    for (i, l) in labels.iter().enumerate() {
        if let Some(j) = seen.insert(l.as_str(), i) {
            return Err(Error::Integrity(format!(
                "duplicate {kind} label {l:?} at positions {j} and {i}"
            )));
        }
    }
    Ok(())
}

impl TypeSchema {
    pub fn new<S: Into<String>>(
        node_types: impl IntoIterator<Item = S>,
        edge_types: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let node_types: Vec<String> = node_types.into_iter().map(Into::into).collect();
        let edge_types: Vec<String> = edge_types.into_iter().map(Into::into).collect();
        check_unique("node type", &node_types)?;
        check_unique("edge type", &edge_types)?;
        Ok(TypeSchema {
            node_types,
            edge_types,
            edge_type_rule: None,
        })
    }

    /// Attaches a rule fixing the edge type of every edge between two node
    /// types. Keys are unordered; giving both `(a, b)` and `(b, a)` with
    /// different values is an error.
    pub fn with_rule(
        mut self,
        rule: impl IntoIterator<Item = ((usize, usize), usize)>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for ((a, b), e) in rule {
            if a >= self.node_types.len() || b >= self.node_types.len() {
                return Err(Error::Integrity(format!(
                    "edge type rule references unknown node type pair ({a}, {b})"
                )));
            }
            if e >= self.edge_types.len() {
                return Err(Error::Integrity(format!(
                    "edge type rule maps to unknown edge type {e}"
                )));
            }
            if let Some(prev) = map.insert(unordered(a, b), e) {
                if prev != e {
                    return Err(Error::Integrity(format!(
                        "edge type rule is not symmetric for pair ({a}, {b})"
                    )));
                }
            }
        }
        self.edge_type_rule = Some(map);
        Ok(self)
    }

    pub fn num_node_types(&self) -> usize {
        self.node_types.len()
    }

    pub fn num_edge_types(&self) -> usize {
        self.edge_types.len()
    }

    /// Reserved end-of-sequence type index.
    pub fn eos_index(&self) -> usize {
        self.node_types.len()
    }

    pub fn node_type_labels(&self) -> &[String] {
        &self.node_types
    }

    pub fn edge_type_labels(&self) -> &[String] {
        &self.edge_types
    }

    pub fn node_type_label(&self, t: usize) -> &str {
        &self.node_types[t]
    }

    pub fn edge_type_label(&self, t: usize) -> &str {
        &self.edge_types[t]
    }

    pub fn node_type_index(&self, label: &str) -> Option<usize> {
        self.node_types.iter().position(|l| l == label)
    }

    pub fn edge_type_index(&self, label: &str) -> Option<usize> {
        self.edge_types.iter().position(|l| l == label)
    }

    pub fn has_rule(&self) -> bool {
        self.edge_type_rule.is_some()
    }

    pub fn rule(&self) -> Option<&BTreeMap<(usize, usize), usize>> {
        self.edge_type_rule.as_ref()
    }

    /// Edge type the rule assigns to an edge between node types `a` and `b`.
    pub fn rule_for(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_type_rule
            .as_ref()
            .and_then(|r| r.get(&unordered(a, b)).copied())
    }

    /// True when a rule exists and covers every unordered node-type pair.
    pub fn rule_is_total(&self) -> bool {
        match &self.edge_type_rule {
            None => false,
            Some(r) => {
                let n = self.node_types.len();
                r.len() == n * (n + 1) / 2
            }
        }
    }
}

/// A canonical undirected edge, `u < v`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub edge_type: usize,
}

impl Edge {
    /// Builds the canonical form of `(a, b)`. Self-loops are rejected.
    pub fn canonical(a: usize, b: usize, edge_type: usize) -> Result<Edge> {
        if a == b {
            return Err(Error::Integrity(format!("self-loop on node {a}")));
        }
        let (u, v) = if a < b { (a, b) } else { (b, a) };
        Ok(Edge { u, v, edge_type })
    }
}

/// Undirected simple graph with typed nodes and typed edges.
///
/// Immutable once built; cloning is cheap for the schema (shared) but copies
/// the adjacency.
#[derive(Clone, Debug, PartialEq)]
pub struct HetGraph {
    schema: Arc<TypeSchema>,
    node_types: Vec<usize>,
    node_names: Vec<String>,
    edges: Vec<Edge>,
    adj: Vec<Vec<(usize, usize)>>,
}

impl HetGraph {
    /// Builds and validates a graph. Edges may be given in any orientation;
    /// exact duplicates collapse, while the same pair listed with two
    /// different edge types is an integrity error.
    pub fn new(
        schema: Arc<TypeSchema>,
        node_types: Vec<usize>,
        edges: impl IntoIterator<Item = (usize, usize, usize)>,
    ) -> Result<HetGraph> {
        let n = node_types.len();
        for (id, &t) in node_types.iter().enumerate() {
            if t >= schema.num_node_types() {
                return Err(Error::Integrity(format!(
                    "node {id} has type index {t}, schema has {} node types",
                    schema.num_node_types()
                )));
            }
        }
        let mut canon: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (a, b, et) in edges {
            if a >= n || b >= n {
                return Err(Error::Integrity(format!(
                    "edge ({a}, {b}) references a node outside 0..{n}"
                )));
            }
            if et >= schema.num_edge_types() {
                return Err(Error::Integrity(format!(
                    "edge ({a}, {b}) has edge type index {et}, schema has {}",
                    schema.num_edge_types()
                )));
            }
            let e = Edge::canonical(a, b, et)?;
            if let Some(prev) = canon.insert((e.u, e.v), et) {
                if prev != et {
                    return Err(Error::Integrity(format!(
                        "edge ({}, {}) listed with two edge types",
                        e.u, e.v
                    )));
                }
            }
        }
        if schema.has_rule() {
            for (&(u, v), &et) in &canon {
                match schema.rule_for(node_types[u], node_types[v]) {
                    Some(r) if r == et => {}
                    Some(r) => {
                        return Err(Error::Integrity(format!(
                            "edge ({u}, {v}) has type {} but the rule requires {}",
                            schema.edge_type_label(et),
                            schema.edge_type_label(r)
                        )))
                    }
                    None => {
                        return Err(Error::Integrity(format!(
                            "edge ({u}, {v}) joins a node-type pair the rule does not cover"
                        )))
                    }
                }
            }
        }
        let edges: Vec<Edge> = canon
            .into_iter()
            .map(|((u, v), edge_type)| Edge { u, v, edge_type })
            .collect();
        let mut adj = vec![Vec::new(); n];
        for e in &edges {
            adj[e.u].push((e.v, e.edge_type));
            adj[e.v].push((e.u, e.edge_type));
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Ok(HetGraph {
            schema,
            node_names: (0..n).map(|i| i.to_string()).collect(),
            node_types,
            edges,
            adj,
        })
    }

    /// Replaces the reporting names of the nodes (the ids seen in files).
    pub fn with_names(mut self, names: Vec<String>) -> Result<HetGraph> {
        if names.len() != self.node_types.len() {
            return Err(Error::Integrity(format!(
                "{} names for {} nodes",
                names.len(),
                self.node_types.len()
            )));
        }
        self.node_names = names;
        Ok(self)
    }

    /// A graph over the same nodes, names and schema with a different edge set.
    pub fn with_edges(&self, edges: impl IntoIterator<Item = (usize, usize, usize)>) -> Result<HetGraph> {
        let g = HetGraph::new(self.schema.clone(), self.node_types.clone(), edges)?;
        g.with_names(self.node_names.clone())
    }

    pub fn schema(&self) -> &TypeSchema {
        &self.schema
    }

    pub fn schema_arc(&self) -> &Arc<TypeSchema> {
        &self.schema
    }

    pub fn num_nodes(&self) -> usize {
        self.node_types.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn node_type(&self, v: usize) -> usize {
        self.node_types[v]
    }

    pub fn node_types(&self) -> &[usize] {
        &self.node_types
    }

    pub fn node_name(&self, v: usize) -> &str {
        &self.node_names[v]
    }

    pub fn node_names(&self) -> &[String] {
        &self.node_names
    }

    /// Canonical edges in ascending `(u, v)` order.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// `(neighbor, edge_type)` pairs in ascending neighbor order.
    pub fn neighbors(&self, v: usize) -> &[(usize, usize)] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adj.iter().map(Vec::len).collect()
    }

    /// Edge type of `{u, v}` if the edge exists.
    pub fn edge_type_between(&self, u: usize, v: usize) -> Option<usize> {
        let list = &self.adj[u];
        list.binary_search_by_key(&v, |&(w, _)| w)
            .ok()
            .map(|i| list[i].1)
    }

    /// Nodes of each type, ascending.
    pub fn nodes_by_type(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.schema.num_node_types()];
        for (v, &t) in self.node_types.iter().enumerate() {
            out[t].push(v);
        }
        out
    }

    /// Number of connected components, isolated nodes included.
    pub fn num_components(&self) -> usize {
        let n = self.num_nodes();
        let mut seen = vec![false; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            count += 1;
            seen[s] = true;
            stack.push(s);
            while let Some(x) = stack.pop() {
                for &(y, _) in &self.adj[x] {
                    if !seen[y] {
                        seen[y] = true;
                        stack.push(y);
                    }
                }
            }
        }
        count
    }
}

/// Randomly partitions the edges into a training graph holding
/// `round(train_fraction * |E|)` edges and a test graph holding the rest.
/// Both keep the full node set.
pub fn split_edges<R: Rng + ?Sized>(
    graph: &HetGraph,
    train_fraction: f64,
    rng: &mut R,
) -> Result<(HetGraph, HetGraph)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Param(format!(
            "train fraction must lie strictly between 0 and 1, got {train_fraction}"
        )));
    }
    let mut edges: Vec<Edge> = graph.edges().to_vec();
    edges.shuffle(rng);
    let k = (train_fraction * edges.len() as f64).round() as usize;
    let as_triple = |e: &Edge| (e.u, e.v, e.edge_type);
    let train = graph.with_edges(edges[..k].iter().map(as_triple))?;
    let test = graph.with_edges(edges[k..].iter().map(as_triple))?;
    Ok((train, test))
}
