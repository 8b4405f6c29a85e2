//! Edge-aware GNN predictors: a gated layer that updates both vertex and
//! edge features, a GAT-style layer whose attention logits ingest edge
//! features, and three-layer MLP readout heads for graph, vertex, and link
//! classification.
//!
//! Layers operate on a [`TapeGraph`], whose vertex matrix and per-edge
//! feature rows live on the autodiff tape; the binary adjacency is a plain
//! tensor. Non-adjacent vertices contribute exactly zero to every message.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;

use crate::params::{Bound, Params};
use crate::tensor::{Tape, Tensor, Var};
use crate::Error;

#[derive(Debug, thiserror::Error)]
pub enum GnnError {
    #[error("edge feature dimension {got} does not match the registered {want}")]
    EdgeDimMismatch { got: usize, want: usize },
    #[error("vertex matrix is {got:?}, expected [{n}, {k}]")]
    VertexShapeMismatch { got: Vec<usize>, n: usize, k: usize },
    #[error("queried pair ({0}, {1}) is out of range for {2} vertices")]
    PairOutOfRange(usize, usize, usize),
}

/// One graph on the tape: differentiable vertices and edge features, a
/// fixed binary adjacency, and optional per-edge scalar weights (used by the
/// straight-through topology path; `None` means weight 1 with no gradient).
#[derive(Debug, Clone)]
pub struct TapeGraph {
    /// N x K vertex feature matrix
    pub vertices: Var,
    /// binary N x N adjacency (not differentiated)
    pub adjacency: Tensor,
    /// 1 x K_e feature row per directed edge with adjacency 1
    pub edges: BTreeMap<(usize, usize), Var>,
    /// optional 1 x 1 multiplier per edge
    pub edge_weights: Option<BTreeMap<(usize, usize), Var>>,
}

impl TapeGraph {
    pub fn n_vertices(&self) -> usize {
        self.adjacency.shape[0]
    }

    /// out-neighborhood {j : A[i, j] = 1}
    fn out_neighbors(&self, i: usize) -> Vec<usize> {
        let n = self.n_vertices();
        (0..n).filter(|&j| self.adjacency.at2(i, j) == 1.0).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GnnKind {
    Gated,
    Gat,
}

#[derive(Debug, Clone)]
pub struct GnnConfig {
    pub kind: GnnKind,
    pub n_layers: usize,
    pub vertex_dim: usize,
    pub edge_dim: usize,
    /// add the layer input to the layer output (dims always match at desk
    /// scale, where every map is square)
    pub residual: bool,
}

impl GnnConfig {
    pub fn register(&self, params: &mut Params, prefix: &str, rng: &mut ChaCha8Rng) {
        let k = self.vertex_dim;
        for l in 0..self.n_layers {
            match self.kind {
                GnnKind::Gated => {
                    // the gated layer rewrites edges to K dims, so only
                    // layer 0 sees the raw edge dimension
                    let e_in = if l == 0 { self.edge_dim } else { k };
                    for (name, shape) in [
                        ("e1", vec![e_in, k]),
                        ("e2", vec![k, k]),
                        ("e3", vec![k, k]),
                        ("vmap", vec![k, k]),
                        ("u", vec![k, k]),
                    ] {
                        params
                            .insert_init(&format!("{prefix}.{l}.{name}"), shape, rng)
                            .expect("unique gnn parameter names");
                    }
                }
                GnnKind::Gat => {
                    for (name, shape) in [
                        ("w", vec![k, k]),
                        ("we", vec![self.edge_dim, k]),
                        ("attn", vec![3 * k, 1]),
                    ] {
                        params
                            .insert_init(&format!("{prefix}.{l}.{name}"), shape, rng)
                            .expect("unique gnn parameter names");
                    }
                }
            }
        }
    }
}

/// weight the gate/attention contribution of one edge when straight-through
/// weights are attached
fn apply_edge_weight(
    tape: &mut Tape,
    g: &TapeGraph,
    ij: (usize, usize),
    row: Var,
) -> Result<Var, Error> {
    match &g.edge_weights {
        Some(w) => Ok(tape.scale_rows(row, w[&ij])?),
        None => Ok(row),
    }
}

/// Gated layer: per edge
/// `e' = e * E1 + v_i * E2 + v_j * E3`, `gate = sigmoid(e')`; per vertex a
/// gated mean `m_i = sum_j gate (.) (v_j * Vmap) / (sum_j gate + 1e-6)` over
/// out-neighbors, then `v' = ReLU(v * U + m)`. Edges are replaced by `e'`.
pub fn gated_layer(
    tape: &mut Tape,
    bound: &mut Bound,
    params: &Params,
    prefix: &str,
    g: &TapeGraph,
    residual: bool,
) -> Result<TapeGraph, Error> {
    let e1 = bound.var(tape, params, &format!("{prefix}.e1"))?;
    let e2 = bound.var(tape, params, &format!("{prefix}.e2"))?;
    let e3 = bound.var(tape, params, &format!("{prefix}.e3"))?;
    let vmap = bound.var(tape, params, &format!("{prefix}.vmap"))?;
    let u = bound.var(tape, params, &format!("{prefix}.u"))?;
    let n = g.n_vertices();
    let k = tape.shape(u)[1];

    let vu = tape.matmul(g.vertices, u)?;
    let vv = tape.matmul(g.vertices, vmap)?;

    let mut new_edges = BTreeMap::new();
    let mut gates: BTreeMap<(usize, usize), Var> = BTreeMap::new();
    for (&(i, j), &e) in &g.edges {
        let v_i = tape.gather_rows(g.vertices, &[i])?;
        let v_j = tape.gather_rows(g.vertices, &[j])?;
        let t1 = tape.matmul(e, e1)?;
        let t2 = tape.matmul(v_i, e2)?;
        let t3 = tape.matmul(v_j, e3)?;
        let s = tape.add(t1, t2)?;
        let e_new = tape.add(s, t3)?;
        let gate = tape.sigmoid(e_new);
        let gate = apply_edge_weight(tape, g, (i, j), gate)?;
        new_edges.insert((i, j), e_new);
        gates.insert((i, j), gate);
    }

    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let vu_i = tape.gather_rows(vu, &[i])?;
        let neighbors: Vec<usize> = g
            .out_neighbors(i)
            .into_iter()
            .filter(|&j| gates.contains_key(&(i, j)))
            .collect();
        let pre = if neighbors.is_empty() {
            vu_i
        } else {
            let mut num = None;
            let mut den = None;
            for &j in &neighbors {
                let gate = gates[&(i, j)];
                let vv_j = tape.gather_rows(vv, &[j])?;
                let term = tape.mul(gate, vv_j)?;
                num = Some(match num {
                    None => term,
                    Some(acc) => tape.add(acc, term)?,
                });
                den = Some(match den {
                    None => gate,
                    Some(acc) => tape.add(acc, gate)?,
                });
            }
            let den = tape.add_scalar(den.unwrap(), 1e-6);
            let m_i = tape.div(num.unwrap(), den)?;
            tape.add(vu_i, m_i)?
        };
        rows.push(tape.relu(pre));
    }
    let mut vertices = tape.concat(&rows, 0)?;
    if residual {
        let in_k = tape.shape(g.vertices)[1];
        if in_k == k {
            vertices = tape.add(vertices, g.vertices)?;
        }
    }
    Ok(TapeGraph {
        vertices,
        adjacency: g.adjacency.clone(),
        edges: new_edges,
        edge_weights: g.edge_weights.clone(),
    })
}

/// GAT-style layer: attention logits from the concatenation of transformed
/// endpoint and edge features, softmax over each vertex's out-neighbors,
/// aggregation of transformed neighbor features. Edges pass through
/// unchanged; a vertex with no neighbors falls back to `ReLU(v_i * W)`.
pub fn gat_layer(
    tape: &mut Tape,
    bound: &mut Bound,
    params: &Params,
    prefix: &str,
    g: &TapeGraph,
    residual: bool,
) -> Result<TapeGraph, Error> {
    let w = bound.var(tape, params, &format!("{prefix}.w"))?;
    let we = bound.var(tape, params, &format!("{prefix}.we"))?;
    let attn = bound.var(tape, params, &format!("{prefix}.attn"))?;
    let n = g.n_vertices();
    let k = tape.shape(w)[1];

    let vw = tape.matmul(g.vertices, w)?;

    let mut logits: BTreeMap<(usize, usize), Var> = BTreeMap::new();
    for (&(i, j), &e) in &g.edges {
        let vw_i = tape.gather_rows(vw, &[i])?;
        let vw_j = tape.gather_rows(vw, &[j])?;
        let ew = tape.matmul(e, we)?;
        let cat = tape.concat(&[vw_i, vw_j, ew], 1)?;
        let score = tape.matmul(cat, attn)?;
        let logit = tape.leaky_relu(score, 0.2);
        let logit = apply_edge_weight(tape, g, (i, j), logit)?;
        logits.insert((i, j), logit);
    }

    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let neighbors: Vec<usize> = g
            .out_neighbors(i)
            .into_iter()
            .filter(|&j| logits.contains_key(&(i, j)))
            .collect();
        let pre = if neighbors.is_empty() {
            tape.gather_rows(vw, &[i])?
        } else {
            let ls: Vec<Var> = neighbors.iter().map(|&j| logits[&(i, j)]).collect();
            let row = tape.concat(&ls, 1)?; // 1 x deg
            let alpha = tape.softmax(row, 1)?;
            let deg = neighbors.len();
            let alpha_col = tape.reshape(alpha, vec![deg, 1])?;
            let stacked = tape.gather_rows(vw, &neighbors)?; // deg x k
            let weighted = tape.scale_rows(stacked, alpha_col)?;
            let summed = tape.sum_axis(weighted, 0)?;
            tape.reshape(summed, vec![1, k])?
        };
        rows.push(tape.relu(pre));
    }
    let mut vertices = tape.concat(&rows, 0)?;
    if residual {
        let in_k = tape.shape(g.vertices)[1];
        if in_k == k {
            vertices = tape.add(vertices, g.vertices)?;
        }
    }
    Ok(TapeGraph {
        vertices,
        adjacency: g.adjacency.clone(),
        edges: g.edges.clone(),
        edge_weights: g.edge_weights.clone(),
    })
}

/// Apply the configured stack of layers in sequence.
pub fn forward_gnn(
    tape: &mut Tape,
    bound: &mut Bound,
    params: &Params,
    prefix: &str,
    cfg: &GnnConfig,
    g: &TapeGraph,
) -> Result<TapeGraph, Error> {
    let mut cur = g.clone();
    for l in 0..cfg.n_layers {
        let lp = format!("{prefix}.{l}");
        cur = match cfg.kind {
            GnnKind::Gated => gated_layer(tape, bound, params, &lp, &cur, cfg.residual)?,
            GnnKind::Gat => gat_layer(tape, bound, params, &lp, &cur, cfg.residual)?,
        };
    }
    Ok(cur)
}

/// How a link classification head assembles its per-pair input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkMode {
    Vertices,
    Edge,
    VerticesPlusEdge,
}

#[derive(Debug, Clone)]
pub struct HeadConfig {
    pub in_dim: usize,
    pub hidden: usize,
    pub n_classes: usize,
}

impl HeadConfig {
    pub fn register(&self, params: &mut Params, prefix: &str, rng: &mut ChaCha8Rng) {
        let dims = [
            (self.in_dim, self.hidden),
            (self.hidden, self.hidden),
            (self.hidden, self.n_classes),
        ];
        for (l, (din, dout)) in dims.into_iter().enumerate() {
            params
                .insert_init(&format!("{prefix}.{l}.w"), vec![din, dout], rng)
                .expect("unique head parameter names");
            params
                .insert(&format!("{prefix}.{l}.b"), Tensor::zeros(vec![1, dout]))
                .expect("unique head parameter names");
        }
    }
}

/// Shared three-layer MLP: two ReLU layers and a linear output, applied to
/// each row of `x` with broadcast biases.
pub fn mlp3(
    tape: &mut Tape,
    bound: &mut Bound,
    params: &Params,
    prefix: &str,
    x: Var,
) -> Result<Var, Error> {
    let n = tape.shape(x)[0];
    let mut h = x;
    for l in 0..3 {
        let w = bound.var(tape, params, &format!("{prefix}.{l}.w"))?;
        let b = bound.var(tape, params, &format!("{prefix}.{l}.b"))?;
        let bb = tape.repeat_rows(b, n)?;
        let z = tape.matmul(h, w)?;
        let z = tape.add(z, bb)?;
        h = if l < 2 { tape.relu(z) } else { z };
    }
    Ok(h)
}

/// Mean over vertices, then the MLP: one logit row for the whole graph.
pub fn graph_class_readout(
    tape: &mut Tape,
    bound: &mut Bound,
    params: &Params,
    prefix: &str,
    g: &TapeGraph,
) -> Result<Var, Error> {
    let pooled = tape.mean_axis(g.vertices, 0)?;
    let k = tape.shape(pooled)[0];
    let row = tape.reshape(pooled, vec![1, k])?;
    mlp3(tape, bound, params, prefix, row)
}

/// Per-vertex MLP: one logit row per vertex.
pub fn vertex_class_readout(
    tape: &mut Tape,
    bound: &mut Bound,
    params: &Params,
    prefix: &str,
    g: &TapeGraph,
) -> Result<Var, Error> {
    mlp3(tape, bound, params, prefix, g.vertices)
}

/// Per queried ordered pair: assemble the input per `mode`, run the MLP.
/// Pairs in Edge/VerticesPlusEdge mode without a stored edge feature get a
/// zero vector and are reported in the returned flag list.
pub fn link_class_readout(
    tape: &mut Tape,
    bound: &mut Bound,
    params: &Params,
    prefix: &str,
    g: &TapeGraph,
    pairs: &[(usize, usize)],
    mode: LinkMode,
    edge_dim: usize,
) -> Result<(Var, Vec<(usize, usize)>), Error> {
    let n = g.n_vertices();
    let mut inputs = Vec::with_capacity(pairs.len());
    let mut flagged = Vec::new();
    for &(i, j) in pairs {
        if i >= n || j >= n {
            return Err(GnnError::PairOutOfRange(i, j, n).into());
        }
        let mut parts = Vec::new();
        if mode != LinkMode::Edge {
            parts.push(tape.gather_rows(g.vertices, &[i])?);
            parts.push(tape.gather_rows(g.vertices, &[j])?);
        }
        if mode != LinkMode::Vertices {
            match g.edges.get(&(i, j)) {
                Some(&e) => parts.push(e),
                None => {
                    flagged.push((i, j));
                    parts.push(tape.constant(Tensor::zeros(vec![1, edge_dim])));
                }
            }
        }
        inputs.push(tape.concat(&parts, 1)?);
    }
    let x = tape.concat(&inputs, 0)?;
    let logits = mlp3(tape, bound, params, prefix, x)?;
    Ok((logits, flagged))
}
