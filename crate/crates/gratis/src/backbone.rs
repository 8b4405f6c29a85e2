//! Backbone producing the global contextual representation: a GCN plus two
//! linear projections for graph input (cube context), or the row-stacked
//! vector matrix for vector-set input (flat context).

use rand_chacha::ChaCha8Rng;

use crate::graph::GraphSample;
use crate::params::{Bound, Params};
use crate::tensor::{Tape, Tensor, Var};
use crate::Error;

/// Global contextual representation on the tape.
///
/// Cube: N x N x D summary of a graph input. Flat: the N x F row-stack of a
/// vector-set input.
#[derive(Debug, Clone, Copy)]
pub enum GlobalContext {
    Cube { var: Var, n: usize, d: usize },
    Flat { var: Var, n: usize, f: usize },
}

impl GlobalContext {
    pub fn var(&self) -> Var {
        match *self {
            GlobalContext::Cube { var, .. } | GlobalContext::Flat { var, .. } => var,
        }
    }

    pub fn n_vertices(&self) -> usize {
        match *self {
            GlobalContext::Cube { n, .. } | GlobalContext::Flat { n, .. } => n,
        }
    }

    /// Channel count of one context token.
    pub fn token_dim(&self) -> usize {
        match *self {
            GlobalContext::Cube { d, .. } => d,
            GlobalContext::Flat { f, .. } => f,
        }
    }
}

/// Shapes of the GCN-CNN backbone. GCN layers chain `vertex_dim` to
/// `vertex_dim`; `w1` maps K to D^2 and `w2` maps K to D.
#[derive(Debug, Clone)]
pub struct BackboneConfig {
    pub vertex_dim: usize,
    pub gcn_layers: usize,
    pub d_ctx: usize,
}

impl BackboneConfig {
    pub fn register(&self, params: &mut Params, prefix: &str, rng: &mut ChaCha8Rng) {
        let k = self.vertex_dim;
        for l in 0..self.gcn_layers {
            params
                .insert_init(&format!("{prefix}.gcn.{l}.w"), vec![k, k], rng)
                .expect("unique backbone parameter names");
        }
        params
            .insert_init(&format!("{prefix}.w1"), vec![k, self.d_ctx * self.d_ctx], rng)
            .expect("unique backbone parameter names");
        params
            .insert_init(&format!("{prefix}.w2"), vec![k, self.d_ctx], rng)
            .expect("unique backbone parameter names");
    }
}

/// Symmetric-normalized propagation matrix with added self-loop:
/// Deg^{-1/2} (A + I) Deg^{-1/2}.
pub fn normalized_adjacency(adjacency: &Tensor) -> Tensor {
    let n = adjacency.shape[0];
    let mut a_hat = vec![0.0; n * n];
    let mut deg = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let v = adjacency.at2(i, j) + if i == j { 1.0 } else { 0.0 };
            a_hat[i * n + j] = v;
            deg[i] += v;
        }
    }
    // self-loop keeps every degree >= 1, so isolated vertices stay finite
    for i in 0..n {
        for j in 0..n {
            a_hat[i * n + j] /= (deg[i] * deg[j]).sqrt();
        }
    }
    Tensor::new(vec![n, n], a_hat).expect("normalized adjacency")
}

/// Per layer H <- ReLU(A_hat * H * W); the final layer omits the ReLU.
pub fn gcn_encode(
    tape: &mut Tape,
    bound: &mut Bound,
    params: &Params,
    config: &BackboneConfig,
    prefix: &str,
    sample: &GraphSample,
) -> Result<Var, Error> {
    let a_hat = tape.constant(normalized_adjacency(&sample.adjacency));
    let mut h = tape.constant(sample.vertices.clone());
    for l in 0..config.gcn_layers {
        let w = bound.var(tape, params, &format!("{prefix}.gcn.{l}.w"))?;
        let propagated = tape.matmul(a_hat, h)?;
        h = tape.matmul(propagated, w)?;
        if l + 1 < config.gcn_layers {
            h = tape.relu(h);
        }
    }
    Ok(h)
}

/// The cube context of Eq-style M1/M2 projections:
/// M1 = Xg*W1 reshaped to (N*D) x D with row (i, d) -> i*D + d, M2 = Xg*W2,
/// P = M1bar * M2^T, and X[i, j, d] = P[i*D + d, j].
pub fn global_context_cube(
    tape: &mut Tape,
    bound: &mut Bound,
    params: &Params,
    config: &BackboneConfig,
    prefix: &str,
    xg: Var,
) -> Result<GlobalContext, Error> {
    let n = tape.shape(xg)[0];
    let d = config.d_ctx;
    let w1 = bound.var(tape, params, &format!("{prefix}.w1"))?;
    let w2 = bound.var(tape, params, &format!("{prefix}.w2"))?;
    let m1 = tape.matmul(xg, w1)?; // N x D^2
    let m1_bar = tape.reshape(m1, vec![n * d, d])?;
    let m2 = tape.matmul(xg, w2)?; // N x D
    let m2_t = tape.transpose2(m2)?;
    let p = tape.matmul(m1_bar, m2_t)?; // (N*D) x N, row index i*D + d
    let p3 = tape.reshape(p, vec![n, d, n])?;
    let cube = tape.permute_axes(p3, &[0, 2, 1])?; // N x N x D
    Ok(GlobalContext::Cube { var: cube, n, d })
}

/// Row-stack of a vector set; the rows themselves are the context.
pub fn vector_set_context(tape: &mut Tape, vectors: &Tensor) -> Result<GlobalContext, Error> {
    if vectors.rank() != 2 {
        return Err(crate::tensor::TensorError::RankMismatch {
            op: "vector_set_context",
            expected: 2,
            shape: vectors.shape.clone(),
        }
        .into());
    }
    let (n, f) = (vectors.shape[0], vectors.shape[1]);
    let var = tape.constant(vectors.clone());
    Ok(GlobalContext::Flat { var, n, f })
}
