//! Seeded synthetic datasets for the three task families.
//!
//! Each generator is a pure function of its config: sample `i` is drawn from
//! an RNG seeded with `seed + i`, so datasets are reproducible and samples
//! can be generated concurrently.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gd::{basic_adjacency, AdjacencyRule};
use crate::graph::{EdgeFeatureStore, GraphSample, TaskLabels};
use crate::tensor::Tensor;

/// Worker cap from `GRATIS_THREADS`; defaults to the machine parallelism.
pub fn worker_count() -> usize {
    std::env::var("GRATIS_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// Deterministic parallel map over sample indices: output order is by index
/// regardless of thread scheduling.
fn gen_indexed<F>(n_samples: usize, f: F) -> Vec<GraphSample>
where
    F: Fn(usize) -> GraphSample + Sync,
{
    let workers = worker_count().min(n_samples.max(1));
    if workers <= 1 {
        return (0..n_samples).map(f).collect();
    }
    let mut out: Vec<Option<GraphSample>> = (0..n_samples).map(|_| None).collect();
    let chunk = n_samples.div_ceil(workers);
    std::thread::scope(|scope| {
        for (w, slice) in out.chunks_mut(chunk).enumerate() {
            let f = &f;
            scope.spawn(move || {
                for (off, slot) in slice.iter_mut().enumerate() {
                    *slot = Some(f(w * chunk + off));
                }
            });
        }
    });
    out.into_iter().map(|s| s.expect("all slots filled")).collect()
}

fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64))
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

// ── SBM vertex classification ───────────────────────────────────────

#[derive(Debug, Clone)]
pub struct SbmConfig {
    pub n_vertices: usize,
    pub n_communities: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_noise: f64,
    pub n_samples: usize,
    pub seed: u64,
}

/// Planted-partition graphs; vertex label = community, features =
/// one-hot(community) + Gaussian noise.
pub fn gen_sbm(config: &SbmConfig) -> Vec<GraphSample> {
    assert!(
        0.0 <= config.p_out && config.p_out < config.p_in && config.p_in <= 1.0,
        "require 0 <= p_out < p_in <= 1"
    );
    let (n, m) = (config.n_vertices, config.n_communities);
    gen_indexed(config.n_samples, |idx| {
        let mut rng = sample_rng(config.seed, idx);
        let communities: Vec<usize> = (0..n).map(|i| i % m) .collect();
        let mut adata = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let p = if communities[i] == communities[j] {
                    config.p_in
                } else {
                    config.p_out
                };
                if rng.gen_bool(p) {
                    adata[i * n + j] = 1.0;
                    adata[j * n + i] = 1.0;
                }
            }
        }
        let mut vdata = vec![0.0; n * m];
        for i in 0..n {
            for c in 0..m {
                let base = if communities[i] == c { 1.0 } else { 0.0 };
                vdata[i * m + c] = base + config.feature_noise * gaussian(&mut rng);
            }
        }
        let adjacency = Tensor::new(vec![n, n], adata).expect("sbm adjacency");
        let edges = EdgeFeatureStore::unit_edges(&adjacency);
        GraphSample::new(
            Tensor::new(vec![n, m], vdata).expect("sbm vertices"),
            adjacency,
            edges,
            TaskLabels::VertexClass(communities),
        )
        .expect("sbm sample")
    })
}

// ── graph classification: one vs two feature clusters ───────────────

#[derive(Debug, Clone)]
pub struct GraphClassConfig {
    pub n_vertices: usize,
    pub feature_dim: usize,
    pub feature_noise: f64,
    pub knn_c: usize,
    pub n_samples: usize,
    pub seed: u64,
}

/// Two balanced classes: class 0 puts every vertex near one feature cluster
/// center, class 1 splits vertices across two opposite centers. Basic
/// adjacency is knn on the features.
pub fn gen_graph_class(config: &GraphClassConfig) -> Vec<GraphSample> {
    let (n, f) = (config.n_vertices, config.feature_dim);
    gen_indexed(config.n_samples, |idx| {
        let mut rng = sample_rng(config.seed, idx);
        let class = idx % 2; // exact label balance by construction
        let mut center = vec![0.0; f];
        let mut norm = 0.0;
        for c in center.iter_mut() {
            *c = gaussian(&mut rng);
            norm += *c * *c;
        }
        let norm = norm.sqrt().max(1e-12);
        center.iter_mut().for_each(|c| *c = 2.0 * *c / norm);
        let mut vdata = vec![0.0; n * f];
        for i in 0..n {
            // class 1: second half of the vertices sit at the mirrored center
            let sign = if class == 1 && i >= n / 2 { -1.0 } else { 1.0 };
            for d in 0..f {
                vdata[i * f + d] =
                    sign * center[d] + config.feature_noise * gaussian(&mut rng);
            }
        }
        let vertices = Tensor::new(vec![n, f], vdata).expect("graph-class vertices");
        let adjacency = basic_adjacency(
            &vertices,
            &AdjacencyRule::Knn {
                metric: crate::gd::KnnMetric::L2,
                c: config.knn_c,
            },
        )
        .expect("knn adjacency");
        let edges = EdgeFeatureStore::unit_edges(&adjacency);
        GraphSample::new(vertices, adjacency, edges, TaskLabels::GraphClass(class))
            .expect("graph-class sample")
    })
}

// ── four-class co-occurrence link prediction ────────────────────────

#[derive(Debug, Clone)]
pub struct CoOccurConfig {
    pub n_vertices: usize,
    /// symmetric pairwise coupling over hidden activation states
    pub coupling: Vec<f64>,
    /// marginal activation probability when coupling is zero
    pub p_active: f64,
    pub feature_dim: usize,
    pub feature_noise: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl CoOccurConfig {
    pub fn uncoupled(n_vertices: usize, n_samples: usize, seed: u64) -> Self {
        CoOccurConfig {
            n_vertices,
            coupling: vec![0.0; n_vertices * n_vertices],
            p_active: 0.5,
            feature_dim: 4,
            feature_noise: 0.3,
            n_samples,
            seed,
        }
    }

    fn assert_symmetric(&self) {
        let n = self.n_vertices;
        assert_eq!(self.coupling.len(), n * n, "coupling must be N x N");
        for i in 0..n {
            for j in 0..n {
                assert!(
                    (self.coupling[i * n + j] - self.coupling[j * n + i]).abs() < 1e-12,
                    "coupling matrix must be symmetric"
                );
            }
        }
    }
}

/// Hidden binary activation per vertex drawn from an Ising-style coupling
/// model; vertex features are noisy embeddings of the own state; the link
/// label of ordered pair (i, j) is `2*s_i + s_j` over all ordered pairs.
pub fn gen_cooccur_links(config: &CoOccurConfig) -> Vec<GraphSample> {
    config.assert_symmetric();
    let n = config.n_vertices;
    let f = config.feature_dim;
    let bias = (config.p_active / (1.0 - config.p_active)).ln();
    // state embeddings fixed across datasets, so train and test splits
    // generated with different seeds agree on what activation looks like
    let mut emb_rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9_7f4a_7c15);
    let active: Vec<f64> = (0..f).map(|_| gaussian(&mut emb_rng)).collect();
    let inactive: Vec<f64> = (0..f).map(|_| gaussian(&mut emb_rng)).collect();
    gen_indexed(config.n_samples, |idx| {
        let mut rng = sample_rng(config.seed, idx);
        let mut states: Vec<bool> = (0..n).map(|_| rng.gen_bool(config.p_active)).collect();
        // a few Gibbs sweeps; with zero coupling this leaves the independent draw
        let coupled = config.coupling.iter().any(|&c| c != 0.0);
        if coupled {
            for _ in 0..5 {
                for i in 0..n {
                    let field: f64 = (0..n)
                        .filter(|&j| j != i)
                        .map(|j| {
                            config.coupling[i * n + j]
                                * if states[j] { 1.0 } else { -1.0 }
                        })
                        .sum();
                    let p = 1.0 / (1.0 + (-(bias + field)).exp());
                    states[i] = rng.gen_bool(p.clamp(0.0, 1.0));
                }
            }
        }
        let mut vdata = vec![0.0; n * f];
        for i in 0..n {
            let emb = if states[i] { &active } else { &inactive };
            for d in 0..f {
                vdata[i * f + d] = emb[d] + config.feature_noise * gaussian(&mut rng);
            }
        }
        let mut labels = BTreeMap::new();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let s_i = states[i] as usize;
                    let s_j = states[j] as usize;
                    labels.insert((i, j), 2 * s_i + s_j);
                }
            }
        }
        GraphSample::new(
            Tensor::new(vec![n, f], vdata).expect("cooccur vertices"),
            Tensor::zeros(vec![n, n]),
            EdgeFeatureStore::new(1),
            TaskLabels::LinkClass(labels),
        )
        .expect("cooccur sample")
    })
}

// ── binary link prediction on geometric graphs ──────────────────────

#[derive(Debug, Clone)]
pub struct BinaryLinksConfig {
    pub n_vertices: usize,
    /// positive label iff j is among the `n_positive` nearest of i
    pub n_positive: usize,
    pub knn_c: usize,
    pub n_samples: usize,
    pub seed: u64,
}

/// Geometric graphs with positive/negative edge labels: vertices are planar
/// points, the basic graph is knn, and the ordered pair (i, j) is positive
/// iff j is among the `n_positive` Euclidean-nearest vertices of i.
pub fn gen_binary_links(config: &BinaryLinksConfig) -> Vec<GraphSample> {
    let n = config.n_vertices;
    assert!(config.n_positive < n && config.knn_c < n);
    gen_indexed(config.n_samples, |idx| {
        let mut rng = sample_rng(config.seed, idx);
        let mut vdata = vec![0.0; n * 2];
        for v in vdata.iter_mut() {
            *v = rng.gen_range(0.0..1.0);
        }
        let vertices = Tensor::new(vec![n, 2], vdata).expect("geometric vertices");
        let adjacency = basic_adjacency(
            &vertices,
            &AdjacencyRule::Knn {
                metric: crate::gd::KnnMetric::L2,
                c: config.knn_c,
            },
        )
        .expect("knn adjacency");
        // brute-force n_positive nearest per vertex
        let mut labels = BTreeMap::new();
        for i in 0..n {
            let mut dists: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let dx = vertices.at2(i, 0) - vertices.at2(j, 0);
                    let dy = vertices.at2(i, 1) - vertices.at2(j, 1);
                    (dx * dx + dy * dy, j)
                })
                .collect();
            dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (rank, &(_, j)) in dists.iter().enumerate() {
                labels.insert((i, j), (rank < config.n_positive) as usize);
            }
        }
        let edges = EdgeFeatureStore::unit_edges(&adjacency);
        GraphSample::new(vertices, adjacency, edges, TaskLabels::LinkClass(labels))
            .expect("binary-links sample")
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sbm_zero_noise_zero_pout_is_clean() {
        let cfg = SbmConfig {
            n_vertices: 10,
            n_communities: 2,
            p_in: 0.8,
            p_out: 0.0,
            feature_noise: 0.0,
            n_samples: 3,
            seed: 1,
        };
        for g in gen_sbm(&cfg) {
            assert!(g.validate().is_empty());
            let labels = match &g.labels {
                TaskLabels::VertexClass(l) => l.clone(),
                _ => panic!(),
            };
            for i in 0..10 {
                for j in 0..10 {
                    if g.adjacency.at2(i, j) == 1.0 {
                        assert_eq!(labels[i], labels[j], "cross-community edge");
                    }
                }
                // exact one-hot features
                for c in 0..2 {
                    let expected = if labels[i] == c { 1.0 } else { 0.0 };
                    assert_eq!(g.vertices.at2(i, c), expected);
                }
            }
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = SbmConfig {
            n_vertices: 12,
            n_communities: 3,
            p_in: 0.5,
            p_out: 0.1,
            feature_noise: 0.4,
            n_samples: 5,
            seed: 77,
        };
        assert_eq!(gen_sbm(&cfg), gen_sbm(&cfg));
        let gc = GraphClassConfig {
            n_vertices: 8,
            feature_dim: 3,
            feature_noise: 0.2,
            knn_c: 2,
            n_samples: 4,
            seed: 9,
        };
        assert_eq!(gen_graph_class(&gc), gen_graph_class(&gc));
        let co = CoOccurConfig::uncoupled(5, 4, 13);
        assert_eq!(gen_cooccur_links(&co), gen_cooccur_links(&co));
        let bl = BinaryLinksConfig {
            n_vertices: 7,
            n_positive: 2,
            knn_c: 3,
            n_samples: 4,
            seed: 5,
        };
        assert_eq!(gen_binary_links(&bl), gen_binary_links(&bl));
    }

    #[test]
    fn sbm_monte_carlo_edge_rate() {
        let cfg = SbmConfig {
            n_vertices: 40,
            n_communities: 2,
            p_in: 0.5,
            p_out: 0.05,
            feature_noise: 0.3,
            n_samples: 200,
            seed: 3,
        };
        let samples = gen_sbm(&cfg);
        let mut within = 0u64;
        let mut within_edges = 0u64;
        for g in &samples {
            let labels = match &g.labels {
                TaskLabels::VertexClass(l) => l.clone(),
                _ => panic!(),
            };
            for i in 0..40 {
                for j in (i + 1)..40 {
                    if labels[i] == labels[j] {
                        within += 1;
                        if g.adjacency.at2(i, j) == 1.0 {
                            within_edges += 1;
                        }
                    }
                }
            }
        }
        let rate = within_edges as f64 / within as f64;
        assert!((rate - 0.5).abs() < 0.03, "within-community rate {rate}");
    }

    #[test]
    fn graph_class_balanced_and_separable_without_noise() {
        let cfg = GraphClassConfig {
            n_vertices: 10,
            feature_dim: 3,
            feature_noise: 0.0,
            knn_c: 2,
            n_samples: 20,
            seed: 4,
        };
        let samples = gen_graph_class(&cfg);
        let mut counts = [0usize; 2];
        for g in &samples {
            assert!(g.validate().is_empty());
            let class = match g.labels {
                TaskLabels::GraphClass(c) => c,
                _ => panic!(),
            };
            counts[class] += 1;
            // brute-force cluster-count oracle: distinct feature vectors
            let mut distinct: Vec<Vec<f64>> = Vec::new();
            for i in 0..10 {
                let row = g.vertices.row(i).to_vec();
                if !distinct
                    .iter()
                    .any(|d| d.iter().zip(&row).all(|(a, b)| (a - b).abs() < 1e-9))
                {
                    distinct.push(row);
                }
            }
            assert_eq!(distinct.len(), class + 1, "cluster count separates classes");
        }
        assert_eq!(counts[0], counts[1]);
    }

    #[test]
    fn cooccur_uncoupled_classes_are_balanced() {
        // pair labels within a sample share one state vector, so the
        // effective sample count is the number of graphs, not of pairs
        let mut cfg = CoOccurConfig::uncoupled(10, 2000, 8);
        cfg.p_active = 0.5;
        let samples = gen_cooccur_links(&cfg);
        let mut counts = [0usize; 4];
        let mut total = 0usize;
        for g in &samples {
            if let TaskLabels::LinkClass(ls) = &g.labels {
                for &c in ls.values() {
                    counts[c] += 1;
                    total += 1;
                }
            }
        }
        assert!(total >= 10_000);
        for c in counts {
            let frac = c as f64 / total as f64;
            assert!((frac - 0.25).abs() < 0.02, "class fraction {frac}");
        }
    }

    #[test]
    fn cooccur_label_definition() {
        // swapping the ordered pair swaps the two mixed classes
        let cfg = CoOccurConfig::uncoupled(6, 10, 21);
        for g in gen_cooccur_links(&cfg) {
            if let TaskLabels::LinkClass(ls) = &g.labels {
                for (&(i, j), &c) in ls {
                    let rev = ls[&(j, i)];
                    match c {
                        0 | 3 => assert_eq!(rev, c),
                        1 => assert_eq!(rev, 2),
                        2 => assert_eq!(rev, 1),
                        _ => panic!("label out of range"),
                    }
                }
            }
        }
    }

    #[test]
    fn generated_samples_validate() {
        let bl = BinaryLinksConfig {
            n_vertices: 9,
            n_positive: 2,
            knn_c: 3,
            n_samples: 5,
            seed: 2,
        };
        for g in gen_binary_links(&bl) {
            assert!(g.validate().is_empty());
        }
        for g in gen_cooccur_links(&CoOccurConfig::uncoupled(5, 5, 2)) {
            assert!(g.validate().is_empty());
        }
    }
}
