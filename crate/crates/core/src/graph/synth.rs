//! Synthetic heterogeneous graphs built from overlapping homogeneous blocks.
//!
//! Every node type gets its own Erdős–Rényi block. A `share_fraction` of each
//! block's nodes are junctions: each junction is additionally treated as a
//! member of one other (randomly chosen) block and draws edges into it with
//! the same intra-block probability. Junctions always receive at least one
//! cross-type edge, so any positive share fraction yields cross-type edges.

use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use super::{HetGraph, TypeSchema};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthParams {
    /// Node count of each type block; the number of entries is the number of types.
    pub block_sizes: Vec<usize>,
    pub intra_edge_prob: f64,
    pub share_fraction: f64,
}

fn type_label(i: usize) -> String {
    if i < 26 {
        char::from(b'A' + i as u8).to_string()
    } else {
        format!("T{i}")
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if self.block_sizes.len() < 2 {
            return Err(Error::Param("at least two node types are required".into()));
        }
        if self.block_sizes.iter().any(|&s| s < 2) {
            return Err(Error::Param("every type block needs at least two nodes".into()));
        }
        for (name, p) in [
            ("intra_edge_prob", self.intra_edge_prob),
            ("share_fraction", self.share_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Param(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        Ok(())
    }

    /// Schema with letter labels and one edge type per unordered type pair.
    pub fn schema(&self) -> TypeSchema {
        let k = self.block_sizes.len();
        let nodes: Vec<String> = (0..k).map(type_label).collect();
        let mut edges = Vec::new();
        let mut rule = Vec::new();
        for a in 0..k {
            for b in a..k {
                rule.push(((a, b), edges.len()));
                edges.push(format!("{}_{}", nodes[a], nodes[b]));
            }
        }
        TypeSchema::new(nodes, edges)
            .and_then(|s| s.with_rule(rule))
            .expect("generated labels are unique")
    }

    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<HetGraph> {
        self.validate()?;
        let schema = Arc::new(self.schema());
        let k = self.block_sizes.len();
        let mut node_types = Vec::new();
        let mut blocks: Vec<Vec<usize>> = Vec::with_capacity(k);
        for (t, &size) in self.block_sizes.iter().enumerate() {
            let start = node_types.len();
            node_types.extend(std::iter::repeat_n(t, size));
            blocks.push((start..start + size).collect());
        }
        let p = self.intra_edge_prob;
        let mut edges = Vec::new();
        for (t, block) in blocks.iter().enumerate() {
            let et = schema.rule_for(t, t).unwrap();
            for (i, &u) in block.iter().enumerate() {
                for &v in &block[i + 1..] {
                    if rng.random::<f64>() < p {
                        edges.push((u, v, et));
                    }
                }
            }
        }
        if self.share_fraction > 0.0 {
            for (t, block) in blocks.iter().enumerate() {
                let shared = ((self.share_fraction * block.len() as f64).ceil() as usize).min(block.len());
                let mut order = block.clone();
                order.shuffle(rng);
                for &u in &order[..shared] {
                    let mut other = rng.random_range(0..k - 1);
                    if other >= t {
                        other += 1;
                    }
                    let et = schema.rule_for(t, other).unwrap();
                    let before = edges.len();
                    for &v in &blocks[other] {
                        if rng.random::<f64>() < p {
                            edges.push((u, v, et));
                        }
                    }
                    if edges.len() == before {
                        let v = *blocks[other].choose(rng).unwrap();
                        edges.push((u, v, et));
                    }
                }
            }
        }
        HetGraph::new(schema, node_types, edges)
    }
}

/// `num_types` blocks of `per_type_size` nodes each.
pub fn synth_hetero_graph<R: Rng + ?Sized>(
    num_types: usize,
    per_type_size: usize,
    intra_edge_prob: f64,
    share_fraction: f64,
    rng: &mut R,
) -> Result<HetGraph> {
    SynthParams {
        block_sizes: vec![per_type_size; num_types],
        intra_edge_prob,
        share_fraction,
    }
    .generate(rng)
}

/// Parameters for a graph of exactly `total_nodes` nodes spread as evenly as
/// possible over `num_types` blocks (earlier blocks take the remainder).
pub fn synth_preset(total_nodes: usize, num_types: usize, intra_edge_prob: f64, share_fraction: f64) -> SynthParams {
    let base = total_nodes / num_types.max(1);
    let extra = total_nodes % num_types.max(1);
    SynthParams {
        block_sizes: (0..num_types).map(|i| base + usize::from(i < extra)).collect(),
        intra_edge_prob,
        share_fraction,
    }
}
