//! Skip-gram node embeddings trained on heterogeneous walks.
//!
//! The walk generator samples nodes by comparing a predicted vector against
//! the embeddings of every node of the requested type, so the table is built
//! once before adversarial training and then kept frozen.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::HetGraph;
use crate::walk::HeteroWalk;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    /// Row-major `num_nodes × dim`.
    vectors: Vec<f64>,
    by_type: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbedParams {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for EmbedParams {
    fn default() -> Self {
        EmbedParams {
            dim: 32,
            window: 2,
            negatives: 5,
            epochs: 5,
            lr: 0.025,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl EmbeddingTable {
    /// Builds a table from explicit vectors (row-major, one row per node).
    pub fn from_vectors(dim: usize, vectors: Vec<f64>, node_types: &[usize], num_types: usize) -> Result<Self> {
        if dim == 0 || vectors.len() != dim * node_types.len() {
            return Err(Error::Shape {
                op: "embedding table",
                left: vec![node_types.len(), dim],
                right: vec![vectors.len()],
            });
        }
        let mut by_type = vec![Vec::new(); num_types];
        for (v, &t) in node_types.iter().enumerate() {
            if t >= num_types {
                return Err(Error::Integrity(format!("node {v} has type {t} >= {num_types}")));
            }
            by_type[t].push(v);
        }
        Ok(EmbeddingTable { dim, vectors, by_type })
    }

    /// Seeded uniform initialization in `[-0.5/dim, 0.5/dim]`.
    pub fn initialize<R: Rng + ?Sized>(graph: &HetGraph, dim: usize, rng: &mut R) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Param(format!("embedding dimension must be >= 2, got {dim}")));
        }
        let half = 0.5 / dim as f64;
        let vectors = (0..graph.num_nodes() * dim)
            .map(|_| rng.random_range(-half..=half))
            .collect();
        Self::from_vectors(dim, vectors, graph.node_types(), graph.schema().num_node_types())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_nodes(&self) -> usize {
        self.vectors.len() / self.dim
    }

    pub fn vector(&self, node: usize) -> &[f64] {
        &self.vectors[node * self.dim..(node + 1) * self.dim]
    }

    pub fn vectors(&self) -> &[f64] {
        &self.vectors
    }

    pub fn by_type(&self) -> &[Vec<usize>] {
        &self.by_type
    }

    /// Members of `t` in ascending id order.
    pub fn members(&self, t: usize) -> Result<&[usize]> {
        match self.by_type.get(t) {
            Some(m) if !m.is_empty() => Ok(m),
            Some(_) => Err(Error::Lookup(format!("node type {t} has no members"))),
            None => Err(Error::Lookup(format!("unknown node type {t}"))),
        }
    }

    /// Row-major `members × dim` matrix of the embeddings of type `t`.
    pub fn type_matrix(&self, t: usize) -> Result<Vec<f64>> {
        Ok(self
            .members(t)?
            .iter()
            .flat_map(|&v| self.vector(v).iter().copied())
            .collect())
    }

    /// Squared Euclidean distance from `query` to every member of `t`, in
    /// member order.
    pub fn type_distances(&self, query: &[f64], t: usize) -> Result<Vec<(usize, f64)>> {
        if query.len() != self.dim {
            return Err(Error::Shape {
                op: "type_distances",
                left: vec![query.len()],
                right: vec![self.dim],
            });
        }
        Ok(self
            .members(t)?
            .iter()
            .map(|&v| {
                let d = self
                    .vector(v)
                    .iter()
                    .zip(query)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (v, d)
            })
            .collect())
    }

    /// Writes `dim=<d> count=<n>` followed by `n × d` little-endian f64s.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let run = || -> std::io::Result<()> {
            let mut w = std::io::BufWriter::new(File::create(path)?);
            writeln!(w, "dim={} count={}", self.dim, self.num_nodes())?;
            for x in &self.vectors {
                w.write_all(&x.to_le_bytes())?;
            }
            w.flush()
        };
        run().map_err(|e| Error::io(path, e))
    }

    /// Reads a table written by [`EmbeddingTable::save`]; node types come
    /// from the graph the table belongs to.
    pub fn load(path: impl AsRef<Path>, graph: &HetGraph) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let mut header = String::new();
        r.read_line(&mut header).map_err(|e| Error::io(path, e))?;
        let parse_err = |msg: String| Error::Parse {
            path: path.display().to_string(),
            line: 1,
            msg,
        };
        let mut dim = None;
        let mut count = None;
        for tok in header.split_whitespace() {
            match tok.split_once('=') {
                Some(("dim", v)) => dim = v.parse::<usize>().ok(),
                Some(("count", v)) => count = v.parse::<usize>().ok(),
                _ => return Err(parse_err(format!("unexpected token {tok:?}"))),
            }
        }
        let (dim, count) = match (dim, count) {
            (Some(d), Some(c)) => (d, c),
            _ => return Err(parse_err("missing dim or count".into())),
        };
        if count != graph.num_nodes() {
            return Err(Error::Integrity(format!(
                "embedding file has {count} rows, graph has {} nodes",
                graph.num_nodes()
            )));
        }
        let mut buf = vec![0u8; dim * count * 8];
        r.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
        let vectors = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_vectors(dim, vectors, graph.node_types(), graph.schema().num_node_types())
    }
}

/// Skip-gram with negative sampling over a walk corpus.
///
/// Every pair of nodes at most `window` positions apart within a walk is a
/// positive example. Negatives are drawn from the corpus unigram
/// distribution raised to the 3/4 power. Nodes absent from the corpus keep
/// their initialization vector.
pub fn train_embeddings<R: Rng + ?Sized>(
    corpus: &[HeteroWalk],
    graph: &HetGraph,
    params: &EmbedParams,
    rng: &mut R,
) -> Result<EmbeddingTable> {
    if corpus.is_empty() {
        return Err(Error::Param("embedding corpus is empty".into()));
    }
    if params.negatives == 0 {
        return Err(Error::Param("at least one negative sample is required".into()));
    }
    let mut table = EmbeddingTable::initialize(graph, params.dim, rng)?;
    let dim = params.dim;
    let n = graph.num_nodes();
    let mut context = vec![0.0; n * dim];

    let mut freq = vec![0usize; n];
    for w in corpus {
        for &v in w.nodes() {
            freq[v] += 1;
        }
    }
    let mut cumulative = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &f in &freq {
        acc += (f as f64).powf(0.75);
        cumulative.push(acc);
    }
    let draw_negative = |rng: &mut R| {
        let x = rng.random::<f64>() * acc;
        cumulative.partition_point(|&c| c <= x).min(n - 1)
    };

    let mut grad = vec![0.0; dim];
    for _ in 0..params.epochs {
        for walk in corpus {
            let nodes = walk.nodes();
            for (i, &center) in nodes.iter().enumerate() {
                let lo = i.saturating_sub(params.window);
                let hi = (i + params.window + 1).min(nodes.len());
                for (j, &ctx) in nodes.iter().enumerate().take(hi).skip(lo) {
                    if j == i {
                        continue;
                    }
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    for k in 0..=params.negatives {
                        let (target, label) = if k == 0 {
                            (ctx, 1.0)
                        } else {
                            let t = draw_negative(rng);
                            if t == ctx {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let c = &mut context[target * dim..(target + 1) * dim];
                        let v = &table.vectors[center * dim..(center + 1) * dim];
                        let dot: f64 = c.iter().zip(v).map(|(a, b)| a * b).sum();
                        let g = params.lr * (label - sigmoid(dot));
                        for d in 0..dim {
                            grad[d] += g * c[d];
                            c[d] += g * v[d];
                        }
                    }
                    for (x, g) in table.vectors[center * dim..(center + 1) * dim].iter_mut().zip(&grad) {
                        *x += g;
                    }
                }
            }
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::TypeSchema;
    use crate::walk::sample_corpus;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn two_cliques() -> HetGraph {
        let s = Arc::new(TypeSchema::new(["A", "B"], ["e"]).unwrap());
        let mut edges = Vec::new();
        for base in [0, 10] {
            for i in 0..10 {
                for j in i + 1..10 {
                    edges.push((base + i, base + j, 0));
                }
            }
        }
        let types = (0..20).map(|v| v % 2).collect();
        HetGraph::new(s, types, edges).unwrap()
    }

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    #[test]
    fn clusters_separate() {
        let g = two_cliques();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let corpus = sample_corpus(&g, 2000, &[8], &mut rng).unwrap();
        let params = EmbedParams { dim: 16, ..Default::default() };
        let t = train_embeddings(&corpus, &g, &params, &mut rng).unwrap();
        let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0, 0.0, 0);
        for a in 0..20 {
            for b in a + 1..20 {
                let c = cosine(t.vector(a), t.vector(b));
                if (a < 10) == (b < 10) {
                    intra += c;
                    ni += 1;
                } else {
                    inter += c;
                    nx += 1;
                }
            }
        }
        let (intra, inter) = (intra / ni as f64, inter / nx as f64);
        assert!(intra > inter, "intra {intra} inter {inter}");
        assert!(t.vectors().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn zero_epochs_keeps_initialization() {
        let g = two_cliques();
        let corpus = sample_corpus(&g, 10, &[3], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let params = EmbedParams { epochs: 0, ..Default::default() };
        let t = train_embeddings(&corpus, &g, &params, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let init = EmbeddingTable::initialize(&g, params.dim, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(t, init);
        let bound = 0.5 / params.dim as f64;
        assert!(t.vectors().iter().all(|x| x.abs() <= bound));
    }

    #[test]
    fn deterministic_and_errors() {
        let g = two_cliques();
        let corpus = sample_corpus(&g, 50, &[4], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let p = EmbedParams::default();
        let a = train_embeddings(&corpus, &g, &p, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let b = train_embeddings(&corpus, &g, &p, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a, b);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(train_embeddings(&[], &g, &p, &mut rng).is_err());
        let zero_neg = EmbedParams { negatives: 0, ..p.clone() };
        assert!(train_embeddings(&corpus, &g, &zero_neg, &mut rng).is_err());
        let small = EmbedParams { dim: 1, ..p };
        assert!(train_embeddings(&corpus, &g, &small, &mut rng).is_err());
    }

    #[test]
    fn distances() {
        let t = EmbeddingTable::from_vectors(2, vec![0.0, 0.0, 3.0, 4.0, 1.0, 1.0], &[0, 0, 1], 2).unwrap();
        assert_eq!(t.type_distances(&[0.0, 0.0], 0).unwrap(), vec![(0, 0.0), (1, 25.0)]);
        assert_eq!(t.type_distances(&[9.0, -2.0], 1).unwrap().len(), 1);
        assert!(t.type_distances(&[0.0], 0).is_err());
        assert!(t.type_distances(&[0.0, 0.0], 5).is_err());
        let empty = EmbeddingTable::from_vectors(2, vec![0.0, 0.0], &[0], 2).unwrap();
        assert!(matches!(empty.type_distances(&[0.0, 0.0], 1), Err(Error::Lookup(_))));
    }

    #[test]
    fn save_load_round_trip() {
        let g = two_cliques();
        let t = EmbeddingTable::initialize(&g, 4, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("emb.bin");
        t.save(&p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"dim=4 count=20\n"));
        assert_eq!(bytes.len(), "dim=4 count=20\n".len() + 20 * 4 * 8);
        assert_eq!(EmbeddingTable::load(&p, &g).unwrap(), t);
    }
}
