//! Statistics for comparing generated graphs with a reference graph.
//!
//! Structural metrics depend only on the unlabeled topology. Edge-set
//! metrics compare typed canonical edges. Meta-path distributions are
//! estimated by sampling uniform walks.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Edge, HetGraph};
use crate::walk::{extract_pattern, HeteroWalk, MetaPathPattern, WalkSampler};

/// Bandwidth of the Gaussian kernel used by [`degree_mmd`].
pub const MMD_SIGMA: f64 = 1.0;

/// Size of the largest connected component; 0 for a graph without nodes.
pub fn lcc(graph: &HetGraph) -> usize {
    let n = graph.num_nodes();
    let mut seen = vec![false; n];
    let mut best = 0;
    let mut stack = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        stack.push(s);
        let mut size = 0;
        while let Some(u) = stack.pop() {
            size += 1;
            for &(v, _) in graph.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        best = best.max(size);
    }
    best
}

fn common_neighbors_above(graph: &HetGraph, u: usize, v: usize, floor: usize) -> usize {
    let (a, b) = (graph.neighbors(u), graph.neighbors(v));
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                if a[i].0 > floor {
                    count += 1;
                }
                i += 1;
                j += 1;
            }
        }
    }
    count
}

/// Number of node triples that are pairwise adjacent.
pub fn triangle_count(graph: &HetGraph) -> u64 {
    graph
        .edges()
        .iter()
        .map(|e| common_neighbors_above(graph, e.u, e.v, e.v) as u64)
        .sum()
}

/// Fraction of neighbor pairs of `v` that are adjacent; 0 below degree 2.
pub fn local_clustering(graph: &HetGraph, v: usize) -> f64 {
    let d = graph.degree(v);
    if d < 2 {
        return 0.0;
    }
    let links: usize = graph
        .neighbors(v)
        .iter()
        .map(|&(u, _)| common_neighbors_above(graph, v, u, u))
        .sum();
    links as f64 / (d * (d - 1) / 2) as f64
}

/// Mean local clustering over all nodes, counting nodes of degree below 2
/// as 0. A graph without nodes scores 0.
pub fn clustering_coef(graph: &HetGraph) -> f64 {
    let n = graph.num_nodes();
    if n == 0 {
        return 0.0;
    }
    (0..n).map(|v| local_clustering(graph, v)).sum::<f64>() / n as f64
}

/// Continuous maximum-likelihood power-law exponent of the degree sequence
/// with `d_min = 1`: `1 + n / Σ ln(d / 0.5)` over nodes of degree at least 1.
/// Returns `+∞` when every such degree equals 1 or there are none, the case
/// where a power law cannot be told apart from a point mass.
pub fn powerlaw_coef(graph: &HetGraph) -> f64 {
    powerlaw_from_degrees(&graph.degrees())
}

pub fn powerlaw_from_degrees(degrees: &[usize]) -> f64 {
    let ds: Vec<f64> = degrees.iter().filter(|&&d| d >= 1).map(|&d| d as f64).collect();
    if ds.iter().all(|&d| d == 1.0) {
        return f64::INFINITY;
    }
    let log_sum: f64 = ds.iter().map(|d| (d / 0.5).ln()).sum();
    1.0 + ds.len() as f64 / log_sum
}

/// Degree assortativity: Pearson correlation of endpoint degrees over both
/// orientations of every edge. NaN when undefined (no edges, or every edge
/// endpoint has the same degree).
pub fn assortativity(graph: &HetGraph) -> f64 {
    let m = graph.num_edges();
    if m == 0 {
        warn!("assortativity is undefined for a graph without edges");
        return f64::NAN;
    }
    let deg = graph.degrees();
    let (mut sx, mut sxx, mut sxy) = (0.0, 0.0, 0.0);
    for e in graph.edges() {
        let (a, b) = (deg[e.u] as f64, deg[e.v] as f64);
        sx += a + b;
        sxx += a * a + b * b;
        sxy += 2.0 * a * b;
    }
    let n = 2.0 * m as f64;
    let mean = sx / n;
    let var = sxx / n - mean * mean;
    if var <= 1e-12 * mean.max(1.0).powi(2) {
        warn!("assortativity is undefined: all edge endpoints have the same degree");
        return f64::NAN;
    }
    ((sxy / n - mean * mean) / var).clamp(-1.0, 1.0)
}

/// Degree histogram normalized to sum 1 (index = degree).
pub fn degree_histogram(graph: &HetGraph) -> Vec<f64> {
    let deg = graph.degrees();
    let max = deg.iter().copied().max().unwrap_or(0);
    let mut h = vec![0.0; max + 1];
    for d in deg {
        h[d] += 1.0;
    }
    let n = graph.num_nodes().max(1) as f64;
    h.iter_mut().for_each(|x| *x /= n);
    h
}

/// Total-variation distance between two histograms, zero-padding the shorter.
pub fn histogram_tv(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(b.len());
    0.5 * (0..n)
        .map(|i| (a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

fn kernel(a: &[f64], b: &[f64], sigma: f64) -> f64 {
    let d = histogram_tv(a, b);
    (-d * d / (sigma * sigma)).exp()
}

/// Squared MMD between two samples of histograms under the kernel
/// `exp(-TV² / σ²)`.
pub fn mmd_histograms(xs: &[Vec<f64>], ys: &[Vec<f64>], sigma: f64) -> f64 {
    let mean_k = |p: &[Vec<f64>], q: &[Vec<f64>]| {
        let mut s = 0.0;
        for a in p {
            for b in q {
                s += kernel(a, b, sigma);
            }
        }
        s / (p.len() * q.len()) as f64
    };
    (mean_k(xs, xs) + mean_k(ys, ys) - 2.0 * mean_k(xs, ys)).max(0.0)
}

/// Squared MMD between the normalized degree histograms of two graphs.
pub fn degree_mmd(a: &HetGraph, b: &HetGraph) -> f64 {
    mmd_histograms(&[degree_histogram(a)], &[degree_histogram(b)], MMD_SIGMA)
}

fn typed_edges(g: &HetGraph) -> BTreeSet<Edge> {
    g.edges().iter().copied().collect()
}

/// Percentage of `generated` edges (with their types) also present in `test`.
/// 0 when `generated` has no edges.
pub fn eo_rate(generated: &HetGraph, test: &HetGraph) -> f64 {
    if generated.num_edges() == 0 {
        return 0.0;
    }
    let t = typed_edges(test);
    let hits = generated.edges().iter().filter(|e| t.contains(e)).count();
    100.0 * hits as f64 / generated.num_edges() as f64
}

/// Edge-edit uniqueness: the mean over graph pairs of
/// `100 × |A △ B| / |A ∪ B|` on typed edge sets.
pub fn uniqueness(graphs: &[HetGraph]) -> Result<f64> {
    if graphs.len() < 2 {
        return Err(Error::Param("uniqueness needs at least two graphs".into()));
    }
    let pairs = uniqueness_pairs(graphs);
    Ok(pairs.iter().sum::<f64>() / pairs.len() as f64)
}

/// The per-pair values averaged by [`uniqueness`], in `(i, j)` order with
/// `i < j`. A pair of edgeless graphs scores 0.
pub fn uniqueness_pairs(graphs: &[HetGraph]) -> Vec<f64> {
    let sets: Vec<BTreeSet<Edge>> = graphs.iter().map(typed_edges).collect();
    let mut out = Vec::new();
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            let union = sets[i].union(&sets[j]).count();
            let diff = sets[i].symmetric_difference(&sets[j]).count();
            out.push(if union == 0 { 0.0 } else { 100.0 * diff as f64 / union as f64 });
        }
    }
    out
}

/// Empirical distribution of meta-path patterns.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PatternDistribution {
    counts: BTreeMap<MetaPathPattern, u64>,
    total: u64,
}

impl PatternDistribution {
    pub fn from_patterns<'a>(patterns: impl IntoIterator<Item = &'a MetaPathPattern>) -> Self {
        let mut d = PatternDistribution::default();
        for p in patterns {
            *d.counts.entry(p.clone()).or_default() += 1;
            d.total += 1;
        }
        d
    }

    pub fn from_walks(walks: &[HeteroWalk]) -> Self {
        let patterns: Vec<MetaPathPattern> = walks.iter().map(extract_pattern).collect();
        Self::from_patterns(&patterns)
    }

    pub fn counts(&self) -> &BTreeMap<MetaPathPattern, u64> {
        &self.counts
    }

    /// Adds the counts of `other`.
    pub fn merge(&mut self, other: &PatternDistribution) {
        for (p, &c) in &other.counts {
            *self.counts.entry(p.clone()).or_default() += c;
        }
        self.total += other.total;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of distinct patterns.
    pub fn support(&self) -> usize {
        self.counts.len()
    }

    pub fn probability(&self, p: &MetaPathPattern) -> f64 {
        match self.total {
            0 => 0.0,
            t => self.counts.get(p).copied().unwrap_or(0) as f64 / t as f64,
        }
    }

    pub fn probabilities(&self) -> BTreeMap<MetaPathPattern, f64> {
        self.counts.keys().map(|p| (p.clone(), self.probability(p))).collect()
    }

    /// Probability mass per pattern length (in edges).
    pub fn by_length(&self) -> BTreeMap<usize, f64> {
        let mut m = BTreeMap::new();
        for p in self.counts.keys() {
            *m.entry(p.len()).or_insert(0.0) += self.probability(p);
        }
        m
    }

    /// Pattern probabilities conditioned on length `len`.
    pub fn conditional(&self, len: usize) -> BTreeMap<MetaPathPattern, f64> {
        let mass: u64 = self.counts.iter().filter(|(p, _)| p.len() == len).map(|(_, &c)| c).sum();
        self.counts
            .iter()
            .filter(|(p, _)| p.len() == len)
            .map(|(p, &c)| (p.clone(), c as f64 / mass as f64))
            .collect()
    }
}

/// Estimates the pattern distribution of `graph` from `samples` uniform
/// walks with lengths drawn uniformly from `lengths`.
pub fn metapath_distribution<R: Rng + ?Sized>(
    graph: &HetGraph,
    lengths: &[usize],
    samples: usize,
    rng: &mut R,
) -> Result<PatternDistribution> {
    let walks = WalkSampler::new(graph)?.corpus(samples, lengths, rng)?;
    Ok(PatternDistribution::from_walks(&walks))
}

/// Total-variation distances between two maps over a shared key space.
pub fn tv<K: Ord>(p: &BTreeMap<K, f64>, q: &BTreeMap<K, f64>) -> f64 {
    let keys: BTreeSet<&K> = p.keys().chain(q.keys()).collect();
    0.5 * keys
        .into_iter()
        .map(|k| (p.get(k).copied().unwrap_or(0.0) - q.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistributionDistance {
    /// TV over all patterns.
    pub overall: f64,
    /// TV between the length marginals.
    pub length_ratio: f64,
    /// TV between the per-length conditional distributions, for every
    /// length that either side observed. A length seen by only one side
    /// scores 1.
    pub by_length: BTreeMap<usize, f64>,
}

pub fn distribution_distance(p: &PatternDistribution, q: &PatternDistribution) -> DistributionDistance {
    let (lp, lq) = (p.by_length(), q.by_length());
    let lengths: BTreeSet<usize> = lp.keys().chain(lq.keys()).copied().collect();
    let by_length = lengths
        .into_iter()
        .map(|len| {
            let d = match (lp.contains_key(&len), lq.contains_key(&len)) {
                (true, true) => tv(&p.conditional(len), &q.conditional(len)),
                _ => 1.0,
            };
            (len, d)
        })
        .collect();
    DistributionDistance {
        overall: tv(&p.probabilities(), &q.probabilities()),
        length_ratio: tv(&lp, &lq),
        by_length,
    }
}

/// The five topology statistics reported for every graph.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StructuralStats {
    pub lcc: usize,
    pub triangles: u64,
    pub clustering: f64,
    pub powerlaw: f64,
    pub assortativity: f64,
}

impl StructuralStats {
    pub fn of(graph: &HetGraph) -> StructuralStats {
        StructuralStats {
            lcc: lcc(graph),
            triangles: triangle_count(graph),
            clustering: clustering_coef(graph),
            powerlaw: powerlaw_coef(graph),
            assortativity: assortativity(graph),
        }
    }
}

/// Erdős–Rényi graph on the nodes of `like` with the same number of edges,
/// each edge typed by the schema rule where one exists, else with type 0.
pub fn erdos_renyi_control<R: Rng + ?Sized>(like: &HetGraph, rng: &mut R) -> Result<HetGraph> {
    let n = like.num_nodes();
    let m = like.num_edges();
    let schema = like.schema();
    let possible = n * n.saturating_sub(1) / 2;
    if m > possible {
        return Err(Error::Param("more edges than node pairs".into()));
    }
    let mut chosen = BTreeSet::new();
    while chosen.len() < m {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v {
            let (a, b) = (u.min(v), u.max(v));
            let (ta, tb) = (like.node_type(a), like.node_type(b));
            if schema.has_rule() && schema.rule_for(ta, tb).is_none() {
                continue;
            }
            chosen.insert((a, b));
        }
    }
    let edges: Vec<(usize, usize, usize)> = chosen
        .into_iter()
        .map(|(a, b)| (a, b, schema.rule_for(like.node_type(a), like.node_type(b)).unwrap_or(0)))
        .collect();
    like.with_edges(edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::TypeSchema;
    use std::sync::Arc;

    fn untyped(n: usize, edges: &[(usize, usize)]) -> HetGraph {
        let schema = Arc::new(TypeSchema::new(["N"], ["e"]).unwrap());
        HetGraph::new(schema, vec![0; n], edges.iter().map(|&(u, v)| (u, v, 0))).unwrap()
    }

    fn clique(n: usize) -> HetGraph {
        let mut e = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                e.push((u, v));
            }
        }
        untyped(n, &e)
    }

    fn star(leaves: usize) -> HetGraph {
        untyped(leaves + 1, &(1..=leaves).map(|v| (0, v)).collect::<Vec<_>>())
    }

    #[test]
    fn component_sizes() {
        assert_eq!(lcc(&untyped(6, &[(0, 1), (1, 2), (2, 3), (3, 4)])), 5);
        assert_eq!(lcc(&untyped(0, &[])), 0);
        assert_eq!(lcc(&untyped(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)])), 3);
    }

    #[test]
    fn triangles() {
        assert_eq!(triangle_count(&clique(3)), 1);
        assert_eq!(triangle_count(&clique(4)), 4);
        assert_eq!(triangle_count(&star(5)), 0);
    }

    #[test]
    fn clustering() {
        assert_eq!(clustering_coef(&clique(3)), 1.0);
        assert_eq!(clustering_coef(&star(4)), 0.0);
        // Triangle 0-1-2 with pendant 3 on node 0: locals 1/3, 1, 1, 0.
        let g = untyped(4, &[(0, 1), (1, 2), (0, 2), (0, 3)]);
        assert!((clustering_coef(&g) - (1.0 / 3.0 + 2.0) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn powerlaw() {
        assert_eq!(powerlaw_from_degrees(&[1, 1, 1, 1]), f64::INFINITY);
        let want = 1.0 + 5.0 / [2.0f64, 4.0, 8.0, 16.0, 32.0].iter().map(|x| x.ln()).sum::<f64>();
        assert!((powerlaw_from_degrees(&[1, 2, 4, 8, 16]) - want).abs() < 1e-12);
        assert_eq!(powerlaw_from_degrees(&[0, 2, 1]), powerlaw_from_degrees(&[1, 2]));
    }

    #[test]
    fn assortativity_cases() {
        assert!((assortativity(&star(4)) + 1.0).abs() < 1e-12);
        let ring = untyped(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)]);
        assert!(assortativity(&ring).is_nan());
        assert!(assortativity(&untyped(3, &[])).is_nan());
    }

    #[test]
    fn mmd_cases() {
        let g = star(3);
        assert!(degree_mmd(&g, &g).abs() < 1e-12);
        let h = clique(4);
        assert_eq!(degree_mmd(&g, &h), degree_mmd(&h, &g));
        let v = mmd_histograms(&[vec![1.0, 0.0]], &[vec![0.0, 1.0]], MMD_SIGMA);
        assert!((v - (2.0 - 2.0 * (-1.0f64 / (MMD_SIGMA * MMD_SIGMA)).exp())).abs() < 1e-12);
    }

    #[test]
    fn edge_set_metrics() {
        let a = untyped(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]);
        let b = untyped(4, &[(0, 1), (1, 2)]);
        let c = untyped(4, &[(0, 2)]);
        assert_eq!(eo_rate(&a, &a), 100.0);
        assert_eq!(eo_rate(&a, &c), 0.0);
        assert_eq!(eo_rate(&a, &b), 50.0);
        assert_eq!(uniqueness(&[a.clone(), a.clone()]).unwrap(), 0.0);
        assert_eq!(uniqueness(&[b.clone(), c]).unwrap(), 100.0);
        let d = untyped(4, &[(1, 2), (2, 3)]);
        assert!((uniqueness(&[b, d]).unwrap() - 200.0 / 3.0).abs() < 1e-9);
        assert!(uniqueness(&[a]).is_err());
    }

    fn pattern(types: &[usize]) -> MetaPathPattern {
        MetaPathPattern::new(types.to_vec(), vec![0; types.len() - 1]).unwrap()
    }

    #[test]
    fn distribution_distances() {
        let (x, y) = (pattern(&[0, 1]), pattern(&[1, 0]));
        let mut p_items = vec![x.clone(); 6];
        p_items.extend(vec![y.clone(); 4]);
        let mut q_items = vec![x.clone(); 5];
        q_items.extend(vec![y.clone(); 5]);
        let p = PatternDistribution::from_patterns(&p_items);
        let q = PatternDistribution::from_patterns(&q_items);
        assert!((distribution_distance(&p, &q).overall - 0.1).abs() < 1e-12);
        assert_eq!(distribution_distance(&p, &p).overall, 0.0);
        let r = PatternDistribution::from_patterns(&[pattern(&[0, 0, 1])]);
        let d = distribution_distance(&p, &r);
        assert_eq!((d.overall, d.length_ratio), (1.0, 1.0));
        assert_eq!(d.by_length[&1], 1.0);
        let total: f64 = p.probabilities().values().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_edge_distribution() {
        let schema = Arc::new(TypeSchema::new(["A", "P"], ["w"]).unwrap());
        let g = HetGraph::new(schema, vec![0, 1], [(0, 1, 0)]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let d = metapath_distribution(&g, &[1], 500, &mut rng).unwrap();
        assert_eq!(d.by_length().len(), 1);
        assert_eq!(d.by_length()[&1], 1.0);
        assert_eq!(d.support(), 2);
    }

    use rand::SeedableRng;

    #[test]
    fn erdos_renyi_matches_size() {
        let g = clique(6);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let er = erdos_renyi_control(&g, &mut rng).unwrap();
        assert_eq!((er.num_nodes(), er.num_edges()), (6, 15));
    }
}
