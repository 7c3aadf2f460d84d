use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use super::{HetGraph, TypeSchema};
use crate::error::{Error, Result};

fn fields(line: &str) -> Vec<&str> {
    if line.contains('\t') {
        line.split('\t').map(str::trim).collect()
    } else {
        line.split_whitespace().collect()
    }
}

/// Yields `(line_number, fields)` for every non-blank, non-comment line.
fn read_records(path: &Path, columns: usize) -> Result<Vec<(usize, Vec<String>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let f = fields(trimmed);
        if f.len() != columns {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                msg: format!("expected {columns} columns, found {}", f.len()),
            });
        }
        out.push((i + 1, f.into_iter().map(str::to_owned).collect()));
    }
    Ok(out)
}

/// Reads a graph from a node file (`id<TAB>type`) and an edge file
/// (`src<TAB>dst<TAB>edge_type`).
///
/// Node ids are arbitrary strings mapped to dense integers in order of first
/// appearance; type labels are indexed the same way. When every node-type
/// pair seen in the edges carries a single edge type, that mapping is
/// attached to the schema as its edge-type rule.
pub fn load_graph(node_file: impl AsRef<Path>, edge_file: impl AsRef<Path>) -> Result<HetGraph> {
    let node_file = node_file.as_ref();
    let edge_file = edge_file.as_ref();

    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut names = Vec::new();
    let mut node_type_labels: Vec<String> = Vec::new();
    let mut node_types = Vec::new();
    for (line, rec) in read_records(node_file, 2)? {
        let t = match node_type_labels.iter().position(|l| *l == rec[1]) {
            Some(t) => t,
            None => {
                node_type_labels.push(rec[1].clone());
                node_type_labels.len() - 1
            }
        };
        match ids.get(&rec[0]) {
            Some(&id) if node_types[id] != t => {
                return Err(Error::Integrity(format!(
                    "{}:{line}: node {} declared with types {} and {}",
                    node_file.display(),
                    rec[0],
                    node_type_labels[node_types[id]],
                    rec[1]
                )))
            }
            Some(_) => {}
            None => {
                ids.insert(rec[0].clone(), names.len());
                names.push(rec[0].clone());
                node_types.push(t);
            }
        }
    }

    let mut edge_type_labels: Vec<String> = Vec::new();
    let mut edges = Vec::new();
    for (line, rec) in read_records(edge_file, 3)? {
        let lookup = |name: &str| {
            ids.get(name).copied().ok_or_else(|| {
                Error::Integrity(format!(
                    "{}:{line}: edge references unknown node {name}",
                    edge_file.display()
                ))
            })
        };
        let u = lookup(&rec[0])?;
        let v = lookup(&rec[1])?;
        let et = match edge_type_labels.iter().position(|l| *l == rec[2]) {
            Some(t) => t,
            None => {
                edge_type_labels.push(rec[2].clone());
                edge_type_labels.len() - 1
            }
        };
        edges.push((u, v, et));
    }

    let mut rule: BTreeMap<(usize, usize), Option<usize>> = BTreeMap::new();
    for &(u, v, et) in &edges {
        let (a, b) = (node_types[u], node_types[v]);
        let key = if a <= b { (a, b) } else { (b, a) };
        let slot = rule.entry(key).or_insert(Some(et));
        if *slot != Some(et) {
            *slot = None;
        }
    }
    let mut schema = TypeSchema::new(node_type_labels, edge_type_labels)?;
    if rule.values().all(Option::is_some) {
        schema = schema.with_rule(rule.into_iter().map(|(k, v)| (k, v.unwrap())))?;
    }
    HetGraph::new(Arc::new(schema), node_types, edges)?.with_names(names)
}

/// Reads a graph over the node set and schema of `reference`. The node file
/// must list exactly the reference nodes with the same types; edge types are
/// resolved by label. Any disagreement is an integrity error.
pub fn load_graph_like(
    reference: &HetGraph,
    node_file: impl AsRef<Path>,
    edge_file: impl AsRef<Path>,
) -> Result<HetGraph> {
    let node_file = node_file.as_ref();
    let edge_file = edge_file.as_ref();
    let schema = reference.schema();
    let ids: HashMap<&str, usize> = reference
        .node_names()
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut seen = vec![false; reference.num_nodes()];
    for (line, rec) in read_records(node_file, 2)? {
        let id = ids.get(rec[0].as_str()).copied();
        match id {
            Some(v) if schema.node_type_label(reference.node_type(v)) == rec[1] => seen[v] = true,
            _ => {
                return Err(Error::Integrity(format!(
                    "{}:{line}: node {} ({}) is not in the reference graph",
                    node_file.display(),
                    rec[0],
                    rec[1]
                )))
            }
        }
    }
    if let Some(v) = seen.iter().position(|s| !s) {
        return Err(Error::Integrity(format!(
            "{}: reference node {} is missing",
            node_file.display(),
            reference.node_name(v)
        )));
    }
    let mut edges = Vec::new();
    for (line, rec) in read_records(edge_file, 3)? {
        let lookup = |name: &str| {
            ids.get(name).copied().ok_or_else(|| {
                Error::Integrity(format!(
                    "{}:{line}: edge references unknown node {name}",
                    edge_file.display()
                ))
            })
        };
        let et = schema.edge_type_index(&rec[2]).ok_or_else(|| {
            Error::Integrity(format!(
                "{}:{line}: edge type {} is not in the reference schema",
                edge_file.display(),
                rec[2]
            ))
        })?;
        edges.push((lookup(&rec[0])?, lookup(&rec[1])?, et));
    }
    reference.with_edges(edges)
}

/// Writes the graph in the format read by [`load_graph`]. Output is a pure
/// function of the graph: nodes in id order, edges in canonical order.
pub fn save_graph(
    graph: &HetGraph,
    node_file: impl AsRef<Path>,
    edge_file: impl AsRef<Path>,
) -> Result<()> {
    let node_file = node_file.as_ref();
    let edge_file = edge_file.as_ref();
    let schema = graph.schema();

    let write_nodes = || -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(node_file)?);
        for v in 0..graph.num_nodes() {
            writeln!(
                w,
                "{}\t{}",
                graph.node_name(v),
                schema.node_type_label(graph.node_type(v))
            )?;
        }
        w.flush()
    };
    write_nodes().map_err(|e| Error::io(node_file, e))?;

    let write_edges = || -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(edge_file)?);
        for e in graph.edges() {
            writeln!(
                w,
                "{}\t{}\t{}",
                graph.node_name(e.u),
                graph.node_name(e.v),
                schema.edge_type_label(e.edge_type)
            )?;
        }
        w.flush()
    };
    write_edges().map_err(|e| Error::io(edge_file, e))
}
