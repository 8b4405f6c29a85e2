//! Task-specific topology prediction: probability adjacency from the cube
//! context (graph input), vertex-decided C-nearest adjacency (non-graph
//! input), and the union rules producing the final binary topology.

use thiserror::Error;

use crate::gd::{knn_adjacency, GdError, KnnMetric};
use crate::params::{Bound, Params};
use crate::tensor::{Tape, Tensor, Var};
use crate::Error;

#[derive(Debug, Error)]
pub enum TtpError {
    #[error("threshold {0} outside [0, 1]")]
    ThetaOutOfRange(f64),
    #[error("adjacency shapes disagree: {0:?} vs {1:?}")]
    ShapeMismatch(Vec<usize>, Vec<usize>),
}

/// N x N edge-presence probabilities, still attached to the tape so the
/// position-wise projection stays trainable.
#[derive(Debug, Clone, Copy)]
pub struct AdjProb {
    pub var: Var,
    pub n: usize,
}

pub fn register_graph_ttp(
    params: &mut Params,
    prefix: &str,
    d_ctx: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) {
    params
        .insert_init(&format!("{prefix}.h"), vec![d_ctx, 1], rng)
        .expect("unique ttp parameter name");
}

/// Eqn-style probability adjacency: X^h = h(X) position-wise, output =
/// row-softmax(X^h) elementwise-times column-softmax(X^h). Entries in (0, 1].
pub fn adjacency_prob(
    tape: &mut Tape,
    bound: &mut Bound,
    params: &Params,
    prefix: &str,
    cube: Var,
) -> Result<AdjProb, Error> {
    let shape = tape.shape(cube).to_vec();
    let (n, d) = (shape[0], shape[2]);
    let h = bound.var(tape, params, &format!("{prefix}.h"))?;
    let flat = tape.reshape(cube, vec![n * n, d])?;
    let xh_flat = tape.matmul(flat, h)?; // (N*N) x 1
    let xh = tape.reshape(xh_flat, vec![n, n])?;
    let row = tape.softmax(xh, 1)?;
    let col = tape.softmax(xh, 0)?;
    let prob = tape.mul(row, col)?;
    Ok(AdjProb { var: prob, n })
}

/// A_hat[i, j] = 1 iff (p[i, j] >= theta or basic[i, j] = 1) and i != j.
pub fn threshold_union(
    prob: &Tensor,
    basic: &Tensor,
    theta: f64,
) -> Result<Tensor, TtpError> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(TtpError::ThetaOutOfRange(theta));
    }
    if prob.shape != basic.shape {
        return Err(TtpError::ShapeMismatch(
            prob.shape.clone(),
            basic.shape.clone(),
        ));
    }
    let n = prob.shape[0];
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j && (prob.at2(i, j) >= theta || basic.at2(i, j) == 1.0) {
                out[i * n + j] = 1.0;
            }
        }
    }
    Ok(Tensor::new(vec![n, n], out).expect("union adjacency"))
}

/// Vertex-decided adjacency: connect each vertex to its `c` Euclidean-nearest
/// neighbors; ties toward the smaller index, out-degree exactly `c`.
pub fn knn_vertex_adjacency(v_hat: &Tensor, c: usize) -> Result<Tensor, GdError> {
    knn_adjacency(v_hat, KnnMetric::L2, c)
}

/// Elementwise logical OR of two binary adjacencies; diagonal forced zero.
pub fn union(a_v: &Tensor, a_basic: &Tensor) -> Result<Tensor, TtpError> {
    if a_v.shape != a_basic.shape {
        return Err(TtpError::ShapeMismatch(
            a_v.shape.clone(),
            a_basic.shape.clone(),
        ));
    }
    let n = a_v.shape[0];
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j && (a_v.at2(i, j) == 1.0 || a_basic.at2(i, j) == 1.0) {
                out[i * n + j] = 1.0;
            }
        }
    }
    Ok(Tensor::new(vec![n, n], out).expect("union adjacency"))
}
