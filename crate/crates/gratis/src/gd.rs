//! Graph Definition: pass pre-defined graphs through untouched, or build
//! basic vertex features (per-vertex extractors over the context) and a
//! rule-based basic adjacency for non-graph input.

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::backbone::GlobalContext;
use crate::graph::GraphSample;
use crate::params::{Bound, Params};
use crate::tensor::{Tape, Tensor, Var};
use crate::Error;

#[derive(Debug, Error)]
pub enum GdError {
    #[error("neighbor count {c} out of range 1..={max}")]
    NeighborCountOutOfRange { c: usize, max: usize },
    #[error("vertices must be rank 2, got {0:?}")]
    BadVertexShape(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KnnMetric {
    L1,
    L2,
    Mahalanobis,
}

/// Human-interpretable rule for the basic adjacency.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjacencyRule {
    /// keep the adjacency the sample came with
    Provided,
    FullyConnected,
    Knn { metric: KnnMetric, c: usize },
}

/// The identity branch for pre-defined graphs.
pub fn define_basic_from_graph(g_in: &GraphSample) -> GraphSample {
    g_in.clone()
}

/// Per-vertex extractor shapes for the vertex feature extraction (FC then
/// global average pooling over the vertex's context tokens).
#[derive(Debug, Clone)]
pub struct VfeConfig {
    pub n_vertices: usize,
    pub ctx_dim: usize,
    pub out_dim: usize,
}

impl VfeConfig {
    pub fn register(&self, params: &mut Params, prefix: &str, rng: &mut ChaCha8Rng) {
        for i in 0..self.n_vertices {
            params
                .insert_init(
                    &format!("{prefix}.vfe.{i}.w"),
                    vec![self.ctx_dim, self.out_dim],
                    rng,
                )
                .expect("unique vfe parameter names");
        }
    }
}

/// Vertex i = mean over its context tokens of (token * FC_i).
///
/// Flat context: extractor i consumes row i (one token, pooling is the
/// identity). Cube context: extractor i consumes the N tokens of slice
/// X[i, :, :].
pub fn vfe_extract(
    tape: &mut Tape,
    bound: &mut Bound,
    params: &Params,
    ctx: &GlobalContext,
    prefix: &str,
) -> Result<Var, Error> {
    let n = ctx.n_vertices();
    let mut rows = Vec::with_capacity(n);
    match *ctx {
        GlobalContext::Flat { var, f, .. } => {
            let _ = f;
            for i in 0..n {
                let w = bound.var(tape, params, &format!("{prefix}.vfe.{i}.w"))?;
                let row = tape.gather_rows(var, &[i])?;
                rows.push(tape.matmul(row, w)?);
            }
        }
        GlobalContext::Cube { var, d, .. } => {
            let flat = tape.reshape(var, vec![n, n * d])?;
            for i in 0..n {
                let w = bound.var(tape, params, &format!("{prefix}.vfe.{i}.w"))?;
                let slice = tape.gather_rows(flat, &[i])?;
                let tokens = tape.reshape(slice, vec![n, d])?;
                let projected = tape.matmul(tokens, w)?; // N x K
                let pooled = tape.mean_axis(projected, 0)?; // K
                let k = tape.shape(pooled)[0];
                rows.push(tape.reshape(pooled, vec![1, k])?);
            }
        }
    }
    Ok(tape.concat(&rows, 0)?)
}

fn pairwise_distance(
    v: &Tensor,
    i: usize,
    j: usize,
    metric: KnnMetric,
    cov_inv: Option<&Vec<f64>>,
) -> f64 {
    let k = v.shape[1];
    let (a, b) = (v.row(i), v.row(j));
    match metric {
        KnnMetric::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        KnnMetric::L2 => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
        KnnMetric::Mahalanobis => {
            let s = cov_inv.expect("covariance inverse prepared");
            let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
            let mut total = 0.0;
            for p in 0..k {
                for q in 0..k {
                    total += diff[p] * s[p * k + q] * diff[q];
                }
            }
            total
        }
    }
}

/// Inverse of the per-sample feature covariance with a 1e-6 diagonal ridge;
/// None when the ridged matrix is still numerically singular.
fn covariance_inverse(v: &Tensor) -> Option<Vec<f64>> {
    let (n, k) = (v.shape[0], v.shape[1]);
    let mut mean = vec![0.0; k];
    for i in 0..n {
        for c in 0..k {
            mean[c] += v.at2(i, c);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; k * k];
    for i in 0..n {
        for p in 0..k {
            for q in 0..k {
                cov[p * k + q] += (v.at2(i, p) - mean[p]) * (v.at2(i, q) - mean[q]);
            }
        }
    }
    cov.iter_mut().for_each(|c| *c /= n as f64);
    for p in 0..k {
        cov[p * k + p] += 1e-6;
    }
    // Gauss-Jordan with partial pivoting
    let mut aug = vec![0.0; k * 2 * k];
    for p in 0..k {
        for q in 0..k {
            aug[p * 2 * k + q] = cov[p * k + q];
        }
        aug[p * 2 * k + k + p] = 1.0;
    }
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&a, &b| {
                aug[a * 2 * k + col]
                    .abs()
                    .partial_cmp(&aug[b * 2 * k + col].abs())
                    .unwrap()
            })
            .unwrap();
        if aug[pivot * 2 * k + col].abs() < 1e-12 {
            return None;
        }
        if pivot != col {
            for q in 0..2 * k {
                aug.swap(col * 2 * k + q, pivot * 2 * k + q);
            }
        }
        let diag = aug[col * 2 * k + col];
        for q in 0..2 * k {
            aug[col * 2 * k + q] /= diag;
        }
        for row in 0..k {
            if row == col {
                continue;
            }
            let factor = aug[row * 2 * k + col];
            for q in 0..2 * k {
                aug[row * 2 * k + q] -= factor * aug[col * 2 * k + q];
            }
        }
    }
    let mut inv = vec![0.0; k * k];
    for p in 0..k {
        for q in 0..k {
            inv[p * k + q] = aug[p * 2 * k + k + q];
        }
    }
    Some(inv)
}

/// Select the `c` nearest neighbors of each row under `metric`; ties break
/// toward the smaller index. Out-degree is exactly `c` for every row.
pub fn knn_adjacency(v: &Tensor, metric: KnnMetric, c: usize) -> Result<Tensor, GdError> {
    if v.rank() != 2 {
        return Err(GdError::BadVertexShape(v.shape.clone()));
    }
    let n = v.shape[0];
    if c == 0 || c >= n {
        return Err(GdError::NeighborCountOutOfRange { c, max: n - 1 });
    }
    let cov_inv = if metric == KnnMetric::Mahalanobis {
        match covariance_inverse(v) {
            Some(inv) => Some(inv),
            None => {
                eprintln!("warning: singular feature covariance, falling back to L2");
                None
            }
        }
    } else {
        None
    };
    let effective = if metric == KnnMetric::Mahalanobis && cov_inv.is_none() {
        KnnMetric::L2
    } else {
        metric
    };
    let mut adata = vec![0.0; n * n];
    for i in 0..n {
        let mut cands: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (pairwise_distance(v, i, j, effective, cov_inv.as_ref()), j))
            .collect();
        cands.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        for &(_, j) in cands.iter().take(c) {
            adata[i * n + j] = 1.0;
        }
    }
    Ok(Tensor::new(vec![n, n], adata).expect("knn adjacency"))
}

/// Binary basic adjacency from a rule; diagonal always zero.
pub fn basic_adjacency(v: &Tensor, rule: &AdjacencyRule) -> Result<Tensor, GdError> {
    if v.rank() != 2 {
        return Err(GdError::BadVertexShape(v.shape.clone()));
    }
    let n = v.shape[0];
    match rule {
        AdjacencyRule::Provided => {
            // caller keeps the provided adjacency; nothing to compute here
            Ok(Tensor::zeros(vec![n, n]))
        }
        AdjacencyRule::FullyConnected => {
            let mut adata = vec![1.0; n * n];
            for i in 0..n {
                adata[i * n + i] = 0.0;
            }
            Ok(Tensor::new(vec![n, n], adata).expect("fc adjacency"))
        }
        AdjacencyRule::Knn { metric, c } => knn_adjacency(v, *metric, *c),
    }
}
