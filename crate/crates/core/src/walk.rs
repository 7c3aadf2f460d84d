//! Heterogeneous walks and the meta-path patterns they follow.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{HetGraph, TypeSchema};

/// A node sequence together with its node types and the types of the edges
/// between consecutive nodes.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HeteroWalk {
    nodes: Vec<usize>,
    types: Vec<usize>,
    edge_types: Vec<usize>,
}

impl HeteroWalk {
    pub fn new(nodes: Vec<usize>, types: Vec<usize>, edge_types: Vec<usize>) -> Result<Self> {
        if nodes.is_empty() || types.len() != nodes.len() || edge_types.len() + 1 != nodes.len() {
            return Err(Error::Contract(format!(
                "walk with {} nodes, {} types and {} edge types",
                nodes.len(),
                types.len(),
                edge_types.len()
            )));
        }
        Ok(HeteroWalk {
            nodes,
            types,
            edge_types,
        })
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn types(&self) -> &[usize] {
        &self.types
    }

    pub fn edge_types(&self) -> &[usize] {
        &self.edge_types
    }

    /// Number of edges.
    pub fn len(&self) -> usize {
        self.edge_types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edge_types.is_empty()
    }

    pub fn reversed(&self) -> HeteroWalk {
        let rev = |v: &[usize]| v.iter().rev().copied().collect::<Vec<_>>();
        HeteroWalk {
            nodes: rev(&self.nodes),
            types: rev(&self.types),
            edge_types: rev(&self.edge_types),
        }
    }

    /// Checks that every node carries its graph type and every step is a
    /// graph edge of the recorded type.
    pub fn validate_against(&self, graph: &HetGraph) -> Result<()> {
        for (&v, &t) in self.nodes.iter().zip(&self.types) {
            if v >= graph.num_nodes() {
                return Err(Error::Integrity(format!("walk node {v} is not in the graph")));
            }
            if graph.node_type(v) != t {
                return Err(Error::Integrity(format!(
                    "walk records type {t} for node {v}, graph has {}",
                    graph.node_type(v)
                )));
            }
        }
        for (i, &et) in self.edge_types.iter().enumerate() {
            let (u, v) = (self.nodes[i], self.nodes[i + 1]);
            match graph.edge_type_between(u, v) {
                Some(g) if g == et => {}
                Some(g) => {
                    return Err(Error::Integrity(format!(
                        "walk step ({u}, {v}) records edge type {et}, graph has {g}"
                    )))
                }
                None => return Err(Error::Integrity(format!("walk step ({u}, {v}) is not an edge"))),
            }
        }
        Ok(())
    }

    /// Renders the walk as `v1:T1,E1,v2:T2,...` using the graph's node names.
    pub fn to_line(&self, schema: &TypeSchema, names: &[String]) -> String {
        let mut s = String::new();
        for i in 0..self.nodes.len() {
            if i > 0 {
                let _ = write!(s, ",{},", schema.edge_type_label(self.edge_types[i - 1]));
            }
            let _ = write!(s, "{}:{}", names[self.nodes[i]], schema.node_type_label(self.types[i]));
        }
        s
    }

    /// Parses a line written by [`HeteroWalk::to_line`] against `graph`.
    pub fn from_line(line: &str, graph: &HetGraph) -> Result<HeteroWalk> {
        let schema = graph.schema();
        let parts: Vec<&str> = line.trim().split(',').collect();
        if parts.len() % 2 == 0 {
            return Err(Error::Contract(format!("malformed walk line {line:?}")));
        }
        let mut nodes = Vec::new();
        let mut types = Vec::new();
        let mut edge_types = Vec::new();
        for (i, p) in parts.iter().enumerate() {
            if i % 2 == 1 {
                let et = schema
                    .edge_type_index(p)
                    .ok_or_else(|| Error::Lookup(format!("unknown edge type {p:?}")))?;
                edge_types.push(et);
                continue;
            }
            let (name, label) = p
                .rsplit_once(':')
                .ok_or_else(|| Error::Contract(format!("malformed walk node {p:?}")))?;
            let v = graph
                .node_names()
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Lookup(format!("unknown node {name:?}")))?;
            let t = schema
                .node_type_index(label)
                .ok_or_else(|| Error::Lookup(format!("unknown node type {label:?}")))?;
            nodes.push(v);
            types.push(t);
        }
        HeteroWalk::new(nodes, types, edge_types)
    }
}

/// The type skeleton of a walk: node types joined by edge types.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MetaPathPattern {
    types: Vec<usize>,
    edge_types: Vec<usize>,
}

impl MetaPathPattern {
    pub fn new(types: Vec<usize>, edge_types: Vec<usize>) -> Result<Self> {
        if types.len() != edge_types.len() + 1 {
            return Err(Error::Contract(format!(
                "pattern with {} node types and {} edge types",
                types.len(),
                edge_types.len()
            )));
        }
        Ok(MetaPathPattern { types, edge_types })
    }

    pub fn types(&self) -> &[usize] {
        &self.types
    }

    pub fn edge_types(&self) -> &[usize] {
        &self.edge_types
    }

    /// Number of edges in the pattern.
    pub fn len(&self) -> usize {
        self.edge_types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edge_types.is_empty()
    }

    pub fn start_type(&self) -> usize {
        self.types[0]
    }

    /// `A-write-P-publish-V` style label.
    pub fn label(&self, schema: &TypeSchema) -> String {
        let mut s = schema.node_type_label(self.types[0]).to_owned();
        for (et, t) in self.edge_types.iter().zip(&self.types[1..]) {
            let _ = write!(s, "-{}-{}", schema.edge_type_label(*et), schema.node_type_label(*t));
        }
        s
    }
}

pub fn extract_pattern(walk: &HeteroWalk) -> MetaPathPattern {
    MetaPathPattern {
        types: walk.types.clone(),
        edge_types: walk.edge_types.clone(),
    }
}

/// Uniform random-walk sampler over a fixed graph.
///
/// Start nodes are drawn uniformly among nodes with at least one neighbor;
/// every step moves to a uniformly chosen neighbor. Walks may revisit nodes.
#[derive(Clone, Debug)]
pub struct WalkSampler<'g> {
    graph: &'g HetGraph,
    starts: Vec<usize>,
}

impl<'g> WalkSampler<'g> {
    pub fn new(graph: &'g HetGraph) -> Result<Self> {
        if graph.num_edges() == 0 {
            return Err(Error::Sampling("cannot sample walks from an edgeless graph".into()));
        }
        let starts = (0..graph.num_nodes()).filter(|&v| graph.degree(v) > 0).collect();
        Ok(WalkSampler { graph, starts })
    }

    pub fn graph(&self) -> &'g HetGraph {
        self.graph
    }

    /// Samples a walk of `length` edges.
    pub fn sample<R: Rng + ?Sized>(&self, length: usize, rng: &mut R) -> Result<HeteroWalk> {
        if length == 0 {
            return Err(Error::Param("walk length must be at least one edge".into()));
        }
        let g = self.graph;
        let mut cur = self.starts[rng.random_range(0..self.starts.len())];
        let mut nodes = Vec::with_capacity(length + 1);
        let mut types = Vec::with_capacity(length + 1);
        let mut edge_types = Vec::with_capacity(length);
        nodes.push(cur);
        types.push(g.node_type(cur));
        for _ in 0..length {
            let nbrs = g.neighbors(cur);
            if nbrs.is_empty() {
                break;
            }
            let (next, et) = nbrs[rng.random_range(0..nbrs.len())];
            nodes.push(next);
            types.push(g.node_type(next));
            edge_types.push(et);
            cur = next;
        }
        Ok(HeteroWalk {
            nodes,
            types,
            edge_types,
        })
    }

    /// Samples `count` walks, each with a length drawn uniformly from `lengths`.
    pub fn corpus<R: Rng + ?Sized>(&self, count: usize, lengths: &[usize], rng: &mut R) -> Result<Vec<HeteroWalk>> {
        if count == 0 {
            return Err(Error::Param("corpus size must be at least 1".into()));
        }
        if lengths.is_empty() {
            return Err(Error::Param("at least one walk length is required".into()));
        }
        (0..count)
            .map(|_| {
                let len = lengths[rng.random_range(0..lengths.len())];
                self.sample(len, rng)
            })
            .collect()
    }
}

pub fn sample_walk<R: Rng + ?Sized>(graph: &HetGraph, length: usize, rng: &mut R) -> Result<HeteroWalk> {
    WalkSampler::new(graph)?.sample(length, rng)
}

pub fn sample_corpus<R: Rng + ?Sized>(
    graph: &HetGraph,
    count: usize,
    lengths: &[usize],
    rng: &mut R,
) -> Result<Vec<HeteroWalk>> {
    WalkSampler::new(graph)?.corpus(count, lengths, rng)
}

pub fn write_corpus(path: impl AsRef<Path>, walks: &[HeteroWalk], graph: &HetGraph) -> Result<()> {
    let path = path.as_ref();
    let run = || -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for walk in walks {
            writeln!(w, "{}", walk.to_line(graph.schema(), graph.node_names()))?;
        }
        w.flush()
    };
    run().map_err(|e| Error::io(path, e))
}

pub fn read_corpus(path: impl AsRef<Path>, graph: &HetGraph) -> Result<Vec<HeteroWalk>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(HeteroWalk::from_line(&line, graph).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn apv() -> HetGraph {
        let s = TypeSchema::new(["A", "P", "V"], ["write", "publish"]).unwrap();
        HetGraph::new(Arc::new(s), vec![0, 1, 2], [(0, 1, 0), (1, 2, 1)]).unwrap()
    }

    #[test]
    fn pattern_of_walk() {
        let w = HeteroWalk::new(vec![0, 1, 2], vec![0, 1, 2], vec![0, 1]).unwrap();
        let p = extract_pattern(&w);
        assert_eq!(p.types(), [0, 1, 2]);
        assert_eq!(p.edge_types(), [0, 1]);
        assert_eq!(p.len(), 2);
        let g = apv();
        assert_eq!(p.label(g.schema()), "A-write-P-publish-V");
        let r = extract_pattern(&w.reversed());
        assert_eq!(r.types(), [2, 1, 0]);
        assert_eq!(r.edge_types(), [1, 0]);
    }

    #[test]
    fn single_edge_walk_is_symmetric() {
        let s = TypeSchema::new(["A", "P"], ["write"]).unwrap();
        let g = HetGraph::new(Arc::new(s), vec![0, 1], [(0, 1, 0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sampler = WalkSampler::new(&g).unwrap();
        let n = 20_000;
        let mut from_zero = 0;
        for _ in 0..n {
            let w = sampler.sample(1, &mut rng).unwrap();
            assert_eq!(w.len(), 1);
            if w.nodes()[0] == 0 {
                assert_eq!(w.nodes(), [0, 1]);
                from_zero += 1;
            } else {
                assert_eq!(w.nodes(), [1, 0]);
            }
        }
        let f = from_zero as f64 / n as f64;
        assert!((f - 0.5).abs() < 0.02, "{f}");
    }

    #[test]
    fn star_second_step_is_uniform_over_leaves() {
        // center 0, leaves 1..=4. Starting from a leaf, step 1 must hit the
        // center and step 2 is uniform over the 4 leaves (1/4 each).
        let s = TypeSchema::new(["C", "L"], ["e"]).unwrap();
        let g = HetGraph::new(Arc::new(s), vec![0, 1, 1, 1, 1], (1..=4).map(|l| (0, l, 0))).unwrap();
        let sampler = WalkSampler::new(&g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut counts = [0usize; 5];
        let mut from_leaf = 0;
        for _ in 0..40_000 {
            let w = sampler.sample(2, &mut rng).unwrap();
            if w.nodes()[0] != 0 {
                assert_eq!(w.nodes()[1], 0);
                counts[w.nodes()[2]] += 1;
                from_leaf += 1;
            }
        }
        for c in &counts[1..] {
            let f = *c as f64 / from_leaf as f64;
            assert!((f - 0.25).abs() < 0.02, "{f}");
        }
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let g = apv();
        let a = sample_walk(&g, 3, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = sample_walk(&g, 3, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn edgeless_graph_errors() {
        let s = TypeSchema::new(["A"], ["e"]).unwrap();
        let g = HetGraph::new(Arc::new(s), vec![0, 0], []).unwrap();
        assert!(matches!(
            sample_walk(&g, 1, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::Sampling(_))
        ));
    }

    #[test]
    fn corpus_sizes_and_lengths() {
        let g = apv();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = sample_corpus(&g, 3, &[1], &mut rng).unwrap();
        assert_eq!(c.len(), 3);
        assert!(c.iter().all(|w| w.len() == 1));
        assert!(sample_corpus(&g, 0, &[1], &mut rng).is_err());
        assert!(sample_corpus(&g, 3, &[], &mut rng).is_err());
    }

    #[test]
    fn length_frequencies_are_uniform() {
        // each length has probability 1/3; with n = 30000 the binomial
        // standard deviation of a frequency is ~0.0027, so ±0.02 is > 7 sigma.
        let g = apv();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let c = sample_corpus(&g, 30_000, &[1, 2, 3], &mut rng).unwrap();
        let mut counts = [0usize; 4];
        for w in &c {
            counts[w.len()] += 1;
        }
        for len in 1..=3 {
            let f = counts[len] as f64 / c.len() as f64;
            assert!((f - 1.0 / 3.0).abs() < 0.02, "length {len}: {f}");
        }
    }

    #[test]
    fn corpus_line_round_trip() {
        let g = apv();
        let w = HeteroWalk::new(vec![0, 1, 2], vec![0, 1, 2], vec![0, 1]).unwrap();
        let line = w.to_line(g.schema(), g.node_names());
        assert_eq!(line, "0:A,write,1:P,publish,2:V");
        assert_eq!(HeteroWalk::from_line(&line, &g).unwrap(), w);
    }
}
