//! Graph assembly from generated walks.
//!
//! Walk transitions are counted into a symmetric score matrix `S`. Edges are
//! then drawn in meta-path-shaped groups: a start node with probability
//! proportional to its `S` degree, a pattern among those beginning with the
//! start node's type in proportion to how often the walks produced it, and
//! then one node per remaining pattern position, each a neighbor in `S` of
//! the required type chosen in proportion to its `S` weight. A group that
//! cannot be completed contributes nothing and sampling restarts.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gan::Model;
use crate::graph::{HetGraph, TypeSchema};
use crate::walk::{extract_pattern, HeteroWalk, MetaPathPattern};

/// Symmetric transition counts between nodes.
///
/// Consecutive repeats of the same node carry no edge and are not counted.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    /// `rows[u]` lists `(v, S[u,v])` for every `v` with a positive count,
    /// sorted by `v`.
    rows: Vec<Vec<(usize, u64)>>,
    degrees: Vec<u64>,
}

impl ScoreMatrix {
    pub fn build(walks: &[HeteroWalk], num_nodes: usize) -> Result<ScoreMatrix> {
        let mut counts: BTreeMap<(usize, usize), u64> = BTreeMap::new();
        for w in walks {
            if let Some(&v) = w.nodes().iter().find(|&&v| v >= num_nodes) {
                return Err(Error::Integrity(format!(
                    "walk visits node {v} but the graph has {num_nodes} nodes"
                )));
            }
            for pair in w.nodes().windows(2) {
                let (u, v) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
                if u != v {
                    *counts.entry((u, v)).or_default() += 1;
                }
            }
        }
        let mut rows = vec![Vec::new(); num_nodes];
        let mut degrees = vec![0; num_nodes];
        for (&(u, v), &c) in &counts {
            rows[u].push((v, c));
            rows[v].push((u, c));
            degrees[u] += c;
            degrees[v] += c;
        }
        for r in &mut rows {
            r.sort_unstable();
        }
        Ok(ScoreMatrix { rows, degrees })
    }

    pub fn num_nodes(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, u: usize, v: usize) -> u64 {
        self.rows
            .get(u)
            .and_then(|r| r.binary_search_by_key(&v, |&(w, _)| w).ok().map(|i| r[i].1))
            .unwrap_or(0)
    }

    pub fn row(&self, u: usize) -> &[(usize, u64)] {
        &self.rows[u]
    }

    pub fn degree(&self, u: usize) -> u64 {
        self.degrees[u]
    }

    pub fn degrees(&self) -> &[u64] {
        &self.degrees
    }

    /// Sum of all stored counts, each unordered pair counted once.
    pub fn total(&self) -> u64 {
        self.degrees.iter().sum::<u64>() / 2
    }

    /// `(u, v, count)` with `u < v`, in ascending order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(u, r)| r.iter().filter(move |&&(v, _)| v > u).map(move |&(v, c)| (u, v, c)))
    }

    /// Draws a node with probability proportional to its degree.
    pub fn sample_start<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        let dist = WeightedIndex::new(&self.degrees)
            .map_err(|_| Error::Sampling("score matrix has no positive entry".into()))?;
        Ok(dist.sample(rng))
    }
}

/// Pattern frequencies of a walk multiset, grouped by start type.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaPathTable {
    counts: BTreeMap<MetaPathPattern, u64>,
    start_totals: BTreeMap<usize, u64>,
}

impl MetaPathTable {
    pub fn build(walks: &[HeteroWalk]) -> Result<MetaPathTable> {
        if walks.is_empty() {
            return Err(Error::Param("cannot tabulate patterns of an empty walk set".into()));
        }
        let mut counts = BTreeMap::new();
        let mut start_totals = BTreeMap::new();
        for w in walks {
            let p = extract_pattern(w);
            *start_totals.entry(p.start_type()).or_default() += 1;
            *counts.entry(p).or_default() += 1;
        }
        Ok(MetaPathTable { counts, start_totals })
    }

    pub fn counts(&self) -> &BTreeMap<MetaPathPattern, u64> {
        &self.counts
    }

    pub fn count(&self, p: &MetaPathPattern) -> u64 {
        self.counts.get(p).copied().unwrap_or(0)
    }

    pub fn start_total(&self, t: usize) -> u64 {
        self.start_totals.get(&t).copied().unwrap_or(0)
    }

    /// Draws a pattern starting with `start_type` with probability
    /// `count / start_total`.
    pub fn sample_pattern<R: Rng + ?Sized>(&self, start_type: usize, rng: &mut R) -> Result<&MetaPathPattern> {
        let total = self.start_total(start_type);
        if total == 0 {
            return Err(Error::Sampling(format!("no pattern starts with node type {start_type}")));
        }
        let mut x = rng.random_range(0..total);
        for (p, &c) in self.counts.range(start_key(start_type)..) {
            if x < c {
                return Ok(p);
            }
            x -= c;
        }
        unreachable!("start totals match pattern counts")
    }
}

/// Smallest pattern beginning with `t`, so a range scan from it visits the
/// patterns of `t` first.
fn start_key(t: usize) -> MetaPathPattern {
    MetaPathPattern::new(vec![t], vec![]).expect("single-type pattern")
}

/// Outcome of following a pattern through `S`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Extension {
    Complete(Vec<usize>),
    /// Stopped at a node with no neighbor of the next required type.
    DeadEnd(Vec<usize>),
}

/// Follows `pattern` from `start`, choosing each next node among the `S`
/// neighbors of the required type with probability proportional to `S`.
/// `allowed(a, b)` can veto node-type transitions.
pub fn extend_by_pattern<R: Rng + ?Sized>(
    s: &ScoreMatrix,
    node_types: &[usize],
    pattern: &MetaPathPattern,
    start: usize,
    rng: &mut R,
    allowed: impl Fn(usize, usize) -> bool,
) -> Result<Extension> {
    if node_types[start] != pattern.start_type() {
        return Err(Error::Contract(format!(
            "start node {start} has type {} but the pattern starts with {}",
            node_types[start],
            pattern.start_type()
        )));
    }
    let mut seq = vec![start];
    let mut cur = start;
    for &want in &pattern.types()[1..] {
        let from = node_types[cur];
        let total: u64 = s
            .row(cur)
            .iter()
            .filter(|&&(v, _)| node_types[v] == want && allowed(from, want))
            .map(|&(_, c)| c)
            .sum();
        if total == 0 {
            return Ok(Extension::DeadEnd(seq));
        }
        let mut x = rng.random_range(0..total);
        for &(v, c) in s.row(cur) {
            if node_types[v] != want {
                continue;
            }
            if x < c {
                cur = v;
                break;
            }
            x -= c;
        }
        seq.push(cur);
    }
    Ok(Extension::Complete(seq))
}

/// Picks output edge types: the schema rule where it applies, otherwise the
/// edge type the walks used most often for the node-type pair (lowest index
/// on ties).
#[derive(Clone, Debug)]
pub struct EdgeTyper {
    majority: BTreeMap<(usize, usize), usize>,
    rule: Option<BTreeMap<(usize, usize), usize>>,
}

impl EdgeTyper {
    pub fn new(walks: &[HeteroWalk], schema: &TypeSchema) -> EdgeTyper {
        let mut votes: BTreeMap<(usize, usize), BTreeMap<usize, u64>> = BTreeMap::new();
        for w in walks {
            for (i, &et) in w.edge_types().iter().enumerate() {
                let (a, b) = (w.types()[i], w.types()[i + 1]);
                *votes.entry((a.min(b), a.max(b))).or_default().entry(et).or_default() += 1;
            }
        }
        let majority = votes
            .into_iter()
            .map(|(k, v)| {
                let best = v.iter().max_by(|x, y| x.1.cmp(y.1).then(y.0.cmp(x.0))).map(|(&e, _)| e);
                (k, best.expect("at least one vote"))
            })
            .collect();
        EdgeTyper {
            majority,
            rule: schema.rule().cloned(),
        }
    }

    /// `None` when the schema has a rule that does not cover the pair, or
    /// no walk connected the two types.
    pub fn edge_type(&self, a: usize, b: usize) -> Option<usize> {
        let key = (a.min(b), a.max(b));
        match &self.rule {
            Some(rule) => rule.get(&key).copied(),
            None => self.majority.get(&key).copied(),
        }
    }
}

/// An assembled graph with the patterns completed while building it.
#[derive(Clone, Debug, PartialEq)]
pub struct Assembly {
    pub graph: HetGraph,
    pub trace: Vec<MetaPathPattern>,
}

fn orient(u: usize, v: usize) -> (usize, usize) {
    (u.min(v), u.max(v))
}

fn pattern_of(seq: &[usize], node_types: &[usize], typer: &EdgeTyper) -> MetaPathPattern {
    let types: Vec<usize> = seq.iter().map(|&v| node_types[v]).collect();
    let edges = types
        .windows(2)
        .map(|p| typer.edge_type(p[0], p[1]).expect("transition was allowed"))
        .collect();
    MetaPathPattern::new(types, edges).expect("consistent lengths")
}

enum Stop {
    Edges(usize),
    Patterns(usize),
}

fn run_assembly<R: Rng + ?Sized>(
    walks: &[HeteroWalk],
    shell: &HetGraph,
    stop: Stop,
    rng: &mut R,
) -> Result<Assembly> {
    let node_types = shell.node_types();
    let s = ScoreMatrix::build(walks, shell.num_nodes())?;
    let table = MetaPathTable::build(walks)?;
    let typer = EdgeTyper::new(walks, shell.schema());
    let starts = WeightedIndex::new(s.degrees())
        .map_err(|_| Error::Sampling("generated walks contain no edge".into()))?;
    let allowed = |a: usize, b: usize| typer.edge_type(a, b).is_some();

    let mut edges: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut trace = Vec::new();
    let (target, patterns) = match stop {
        Stop::Edges(n) => (n, usize::MAX),
        Stop::Patterns(n) => (usize::MAX, n),
    };
    let stall_bound = match stop {
        Stop::Edges(n) => 10 * n,
        Stop::Patterns(n) => 10 * n,
    };
    let mut fruitless = 0;
    while edges.len() < target && trace.len() < patterns {
        if fruitless >= stall_bound {
            let partial = shell.with_edges(edges.iter().map(|(&(u, v), &t)| (u, v, t)))?;
            return Err(Error::Stall {
                reached: edges.len(),
                target,
                partial: Box::new(partial),
            });
        }
        let start = starts.sample(rng);
        let Ok(pattern) = table.sample_pattern(node_types[start], rng) else {
            fruitless += 1;
            continue;
        };
        let seq = match extend_by_pattern(&s, node_types, pattern, start, rng, allowed)? {
            Extension::Complete(seq) => seq,
            Extension::DeadEnd(_) => {
                fruitless += 1;
                continue;
            }
        };
        let before = edges.len();
        for pair in seq.windows(2) {
            if pair[0] == pair[1] {
                continue;
            }
            let et = typer
                .edge_type(node_types[pair[0]], node_types[pair[1]])
                .expect("transition was allowed");
            edges.entry(orient(pair[0], pair[1])).or_insert(et);
        }
        trace.push(pattern_of(&seq, node_types, &typer));
        if edges.len() > before {
            fruitless = 0;
        } else {
            fruitless += 1;
        }
    }
    let graph = shell.with_edges(edges.iter().map(|(&(u, v), &t)| (u, v, t)))?;
    Ok(Assembly { graph, trace })
}

/// Builds a graph on the nodes of `shell` (its edges are ignored) with
/// `target_edges` distinct edges. Stops with [`Error::Stall`] after
/// `10 × target_edges` consecutive attempts that add no edge.
pub fn assemble<R: Rng + ?Sized>(
    walks: &[HeteroWalk],
    shell: &HetGraph,
    target_edges: usize,
    rng: &mut R,
) -> Result<Assembly> {
    if target_edges == 0 {
        return Err(Error::Param("target edge count must be at least 1".into()));
    }
    run_assembly(walks, shell, Stop::Edges(target_edges), rng)
}

/// Runs the pattern-guided sampler until `completed` patterns have been
/// traced, ignoring how many distinct edges that yields.
pub fn assembly_trace<R: Rng + ?Sized>(
    walks: &[HeteroWalk],
    shell: &HetGraph,
    completed: usize,
    rng: &mut R,
) -> Result<Vec<MetaPathPattern>> {
    Ok(run_assembly(walks, shell, Stop::Patterns(completed), rng)?.trace)
}

/// Ablation that draws single edges with probability proportional to `S`,
/// ignoring patterns. Each drawn edge is traced as a one-edge pattern in a
/// random orientation.
pub fn assemble_probabilistic<R: Rng + ?Sized>(
    walks: &[HeteroWalk],
    shell: &HetGraph,
    target_edges: usize,
    max_draws: Option<usize>,
    rng: &mut R,
) -> Result<Assembly> {
    let node_types = shell.node_types();
    let s = ScoreMatrix::build(walks, shell.num_nodes())?;
    let typer = EdgeTyper::new(walks, shell.schema());
    let entries: Vec<(usize, usize, u64)> = s
        .entries()
        .filter(|&(u, v, _)| typer.edge_type(node_types[u], node_types[v]).is_some())
        .collect();
    let dist = WeightedIndex::new(entries.iter().map(|e| e.2))
        .map_err(|_| Error::Sampling("generated walks contain no usable edge".into()))?;
    let mut edges: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut trace = Vec::new();
    let mut fruitless = 0;
    let draws = max_draws.unwrap_or(usize::MAX);
    while edges.len() < target_edges && trace.len() < draws {
        if fruitless >= 10 * target_edges {
            let partial = shell.with_edges(edges.iter().map(|(&(u, v), &t)| (u, v, t)))?;
            return Err(Error::Stall {
                reached: edges.len(),
                target: target_edges,
                partial: Box::new(partial),
            });
        }
        let (u, v, _) = entries[dist.sample(rng)];
        let (a, b) = if rng.random::<bool>() { (u, v) } else { (v, u) };
        let et = typer.edge_type(node_types[a], node_types[b]).expect("filtered");
        trace.push(MetaPathPattern::new(vec![node_types[a], node_types[b]], vec![et])?);
        if edges.insert((u, v), et).is_none() {
            fruitless = 0;
        } else {
            fruitless += 1;
        }
    }
    let graph = shell.with_edges(edges.iter().map(|(&(u, v), &t)| (u, v, t)))?;
    Ok(Assembly { graph, trace })
}

/// Generates walks from `model` and assembles one graph with
/// `target_edges` edges, using the assembler selected by the model's
/// configuration.
pub fn generate_graph<R: Rng + ?Sized>(model: &Model, target_edges: usize, rng: &mut R) -> Result<Assembly> {
    let count = ((model.config.walks_per_edge * target_edges as f64).ceil() as usize).max(1);
    let walks = model.generate_walks(count, rng)?;
    let shell = model.empty_graph()?;
    if model.config.probabilistic_assembler {
        assemble_probabilistic(&walks, &shell, target_edges, None, rng)
    } else {
        assemble(&walks, &shell, target_edges, rng)
    }
}

/// Seeded RNG for the `index`-th independent job of a run.
pub fn job_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// [`generate_graph`] `count` times in parallel, graph `i` drawing from
/// `job_rng(seed, i)`. Results are in index order.
pub fn generate_graphs(model: &Model, count: usize, target_edges: usize, seed: u64) -> Vec<Result<Assembly>> {
    (0..count)
        .into_par_iter()
        .map(|i| generate_graph(model, target_edges, &mut job_rng(seed, i)))
        .collect()
}

/// Distinct patterns with their share of `trace`.
pub fn trace_distribution(trace: &[MetaPathPattern]) -> BTreeMap<MetaPathPattern, f64> {
    let mut counts: BTreeMap<MetaPathPattern, usize> = BTreeMap::new();
    for p in trace {
        *counts.entry(p.clone()).or_default() += 1;
    }
    let n = trace.len().max(1) as f64;
    counts.into_iter().map(|(p, c)| (p, c as f64 / n)).collect()
}
