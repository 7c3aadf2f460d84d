//! Evaluation of a set of generated graphs against the training graph.
//!
//! The text form has one `metric<TAB>mean<TAB>stddev` line per metric. The
//! training graph's own structural values appear as `real.<metric>` lines
//! with stddev 0. A pattern block follows, one `pattern<TAB>probability`
//! line per pattern, grouped under `# patterns <source> length <l>` headers.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::assembler::job_rng;
use crate::error::{Error, Result};
use crate::graph::HetGraph;
use crate::metrics::{
    degree_mmd, distribution_distance, eo_rate, metapath_distribution, uniqueness_pairs, PatternDistribution,
    StructuralStats,
};

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub name: String,
    pub mean: f64,
    pub stddev: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub rows: Vec<MetricRow>,
    /// Pattern distribution of the training graph.
    pub reference_patterns: PatternDistribution,
    /// Pooled pattern distribution over the generated graphs.
    pub generated_patterns: PatternDistribution,
    pub pattern_labels: BTreeMap<crate::walk::MetaPathPattern, String>,
}

/// Walk-sampling settings for meta-path distributions.
#[derive(Clone, Debug, PartialEq)]
pub struct PatternSampling {
    pub lengths: Vec<usize>,
    pub samples: usize,
    pub seed: u64,
}

impl Default for PatternSampling {
    fn default() -> Self {
        PatternSampling {
            lengths: vec![1, 2, 3],
            samples: 20_000,
            seed: 0,
        }
    }
}

/// Mean and sample standard deviation; stddev is 0 for fewer than 2 values.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

struct PerGraph {
    stats: StructuralStats,
    mmd: f64,
    eo: f64,
    patterns: PatternDistribution,
    length_tv: f64,
    pattern_tv: f64,
    overall_tv: f64,
}

impl Report {
    pub fn get(&self, name: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            let _ = writeln!(s, "{}\t{}\t{}", r.name, r.mean, r.stddev);
        }
        for (source, dist) in [("real", &self.reference_patterns), ("generated", &self.generated_patterns)] {
            let mut by_len: BTreeMap<usize, Vec<(&str, f64)>> = BTreeMap::new();
            for (p, prob) in dist.probabilities() {
                by_len.entry(p.len()).or_default().push((&self.pattern_labels[&p], prob));
            }
            for (len, mut rows) in by_len {
                rows.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
                let _ = writeln!(s, "# patterns {source} length {len}");
                for (label, prob) in rows {
                    let _ = writeln!(s, "{label}\t{prob}");
                }
            }
        }
        s
    }
}

/// Runs the full metric suite. Per-graph work runs in parallel; graph `i`
/// samples its walks from `job_rng(sampling.seed, i + 1)` and the training
/// graph from stream 0, so the report does not depend on scheduling.
pub fn evaluate(generated: &[HetGraph], train: &HetGraph, test: &HetGraph, sampling: &PatternSampling) -> Result<Report> {
    if generated.is_empty() {
        return Err(Error::Param("no generated graphs to evaluate".into()));
    }
    for g in std::iter::once(test).chain(generated) {
        if g.schema() != train.schema() || g.node_types() != train.node_types() {
            return Err(Error::Integrity(
                "evaluated graphs must share the training graph's schema and nodes".into(),
            ));
        }
    }
    let reference = metapath_distribution(train, &sampling.lengths, sampling.samples, &mut job_rng(sampling.seed, 0))?;
    let per: Vec<PerGraph> = generated
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            let mut rng = job_rng(sampling.seed, i + 1);
            let patterns = if g.num_edges() == 0 {
                PatternDistribution::default()
            } else {
                metapath_distribution(g, &sampling.lengths, sampling.samples, &mut rng)?
            };
            let d = distribution_distance(&reference, &patterns);
            Ok(PerGraph {
                stats: StructuralStats::of(g),
                mmd: degree_mmd(g, train),
                eo: eo_rate(g, test),
                length_tv: d.length_ratio,
                pattern_tv: d.by_length.values().copied().fold(0.0, f64::max),
                overall_tv: d.overall,
                patterns,
            })
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut push = |name: &str, xs: Vec<f64>| {
        let (mean, stddev) = mean_std(&xs);
        rows.push(MetricRow {
            name: name.to_string(),
            mean,
            stddev,
        });
    };
    let structural: [(&str, fn(&StructuralStats) -> f64); 5] = [
        ("lcc", |s| s.lcc as f64),
        ("triangle_count", |s| s.triangles as f64),
        ("clustering_coef", |s| s.clustering),
        ("powerlaw_coef", |s| s.powerlaw),
        ("assortativity", |s| s.assortativity),
    ];
    for (name, f) in structural {
        push(name, per.iter().map(|p| f(&p.stats)).collect());
    }
    push("degree_mmd", per.iter().map(|p| p.mmd).collect());
    push("eo_rate", per.iter().map(|p| p.eo).collect());
    if generated.len() >= 2 {
        push("uniqueness", uniqueness_pairs(generated));
    }
    push("metapath_length_tv", per.iter().map(|p| p.length_tv).collect());
    push("metapath_pattern_tv", per.iter().map(|p| p.pattern_tv).collect());
    push("metapath_tv", per.iter().map(|p| p.overall_tv).collect());
    let real = StructuralStats::of(train);
    for (name, f) in structural {
        push(&format!("real.{name}"), vec![f(&real)]);
    }

    let mut pooled = PatternDistribution::default();
    for p in &per {
        pooled.merge(&p.patterns);
    }
    let pattern_labels = reference
        .counts()
        .keys()
        .chain(pooled.counts().keys())
        .map(|p| (p.clone(), p.label(train.schema())))
        .collect();
    Ok(Report {
        rows,
        reference_patterns: reference,
        generated_patterns: pooled,
        pattern_labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{split_edges, synth_hetero_graph};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mean_std_values() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn self_evaluation_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = synth_hetero_graph(3, 10, 0.3, 0.2, &mut rng).unwrap();
        let (train, test) = split_edges(&g, 0.6, &mut rng).unwrap();
        let sampling = PatternSampling {
            samples: 2000,
            ..PatternSampling::default()
        };
        let r = evaluate(&[train.clone(), train.clone()], &train, &test, &sampling).unwrap();
        for m in ["lcc", "triangle_count", "clustering_coef", "powerlaw_coef"] {
            assert_eq!(r.get(m).unwrap().mean, r.get(&format!("real.{m}")).unwrap().mean, "{m}");
        }
        assert_eq!(r.get("degree_mmd").unwrap().mean, 0.0);
        assert_eq!(r.get("eo_rate").unwrap().mean, 0.0);
        assert_eq!(r.get("uniqueness").unwrap().mean, 0.0);
        let text = r.to_text();
        assert!(text.starts_with("lcc\t"));
        assert!(text.contains("# patterns real length 1"));
        assert_eq!(text, evaluate(&[train.clone(), train.clone()], &train, &test, &sampling).unwrap().to_text());
    }

    #[test]
    fn rejects_foreign_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = synth_hetero_graph(3, 5, 0.5, 0.2, &mut rng).unwrap();
        let b = synth_hetero_graph(2, 5, 0.5, 0.2, &mut rng).unwrap();
        let s = PatternSampling::default();
        assert!(matches!(evaluate(&[b], &a, &a, &s), Err(Error::Integrity(_))));
        assert!(matches!(evaluate(&[], &a, &a, &s), Err(Error::Param(_))));
    }
}
