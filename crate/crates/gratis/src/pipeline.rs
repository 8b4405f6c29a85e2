//! End-to-end assembly: backbone, graph definition, topology prediction,
//! edge feature generation, GNN predictor, and the training loops. The
//! ablation switch mirrors the four studied settings: untouched basic graph,
//! learned topology only, learned edge features only, or both.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backbone::{gcn_encode, global_context_cube, vector_set_context, BackboneConfig};
use crate::gd::{basic_adjacency, vfe_extract, AdjacencyRule, VfeConfig};
use crate::gnn::{
    forward_gnn, graph_class_readout, link_class_readout, vertex_class_readout, GnnConfig,
    GnnKind, HeadConfig, LinkMode, TapeGraph,
};
use crate::graph::{EdgeFeatureStore, GraphSample, TaskLabels};
use crate::mefg::{generate_edge_features, MefgConfig};
use crate::params::{Bound, Params};
use crate::tensor::{Tape, Tensor, Var};
use crate::train::{
    classification_report, cosine_schedule, cross_entropy, inverse_frequency_weights,
    metric_hits_at_k, argmax_rows, AdamW, MetricReport,
};
use crate::ttp::{adjacency_prob, knn_vertex_adjacency, threshold_union, union};
use crate::Error;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("training requires a nonempty dataset")]
    EmptyDataset,
    #[error("sample task is {got}, the pipeline is configured for {want}")]
    TaskMismatch {
        want: &'static str,
        got: &'static str,
    },
    #[error("{0} requires vector-set input")]
    NeedsVectorSet(&'static str),
    #[error("sample has {got} vertices, the pipeline is configured for {want}")]
    VertexCountMismatch { got: usize, want: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    Graph,
    VectorSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    Baseline,
    TtpOnly,
    MefgOnly,
    TtpMefg,
}

impl Ablation {
    pub fn uses_ttp(self) -> bool {
        matches!(self, Ablation::TtpOnly | Ablation::TtpMefg)
    }

    pub fn uses_mefg(self) -> bool {
        matches!(self, Ablation::MefgOnly | Ablation::TtpMefg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    GraphClass,
    VertexClass,
    LinkClass,
}

impl TaskKind {
    fn name(self) -> &'static str {
        match self {
            TaskKind::GraphClass => "graph",
            TaskKind::VertexClass => "vertex",
            TaskKind::LinkClass => "link",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub input_kind: InputKind,
    pub task: TaskKind,
    pub ablation: Ablation,
    /// vertex feature dimension K (also the GNN width and the MEFG edge
    /// dimension)
    pub vertex_dim: usize,
    /// vertex count (fixed per dataset; the VFE is position-wise)
    pub n_vertices: usize,
    /// raw feature dimension of vector-set input (context token width)
    pub input_dim: usize,
    /// edge dimension of the basic graph (unit edges are 1)
    pub basic_edge_dim: usize,
    pub n_classes: usize,
    pub backbone_layers: usize,
    /// context cube channel count D
    pub d_ctx: usize,
    pub gd_rule: AdjacencyRule,
    pub theta: f64,
    pub ttp_c: usize,
    pub straight_through: bool,
    pub gnn_kind: GnnKind,
    pub gnn_layers: usize,
    pub link_mode: LinkMode,
    pub head_hidden: usize,
}

impl PipelineConfig {
    /// Edge dimension presented to the GNN.
    pub fn gnn_edge_dim(&self) -> usize {
        if self.ablation.uses_mefg() {
            self.vertex_dim
        } else {
            self.basic_edge_dim
        }
    }

    /// Edge dimension after the GNN stack (the gated layer rewrites edges
    /// to K dims; the GAT passes them through).
    fn post_gnn_edge_dim(&self) -> usize {
        match self.gnn_kind {
            GnnKind::Gated if self.gnn_layers > 0 => self.vertex_dim,
            _ => self.gnn_edge_dim(),
        }
    }

    fn head_in_dim(&self) -> usize {
        let k = self.vertex_dim;
        match self.task {
            TaskKind::GraphClass | TaskKind::VertexClass => k,
            TaskKind::LinkClass => match self.link_mode {
                LinkMode::Vertices => 2 * k,
                LinkMode::Edge => self.post_gnn_edge_dim(),
                LinkMode::VerticesPlusEdge => 2 * k + self.post_gnn_edge_dim(),
            },
        }
    }

    pub fn gnn(&self) -> GnnConfig {
        GnnConfig {
            kind: self.gnn_kind,
            n_layers: self.gnn_layers,
            vertex_dim: self.vertex_dim,
            edge_dim: self.gnn_edge_dim(),
            residual: true,
        }
    }

    fn mefg(&self) -> MefgConfig {
        MefgConfig {
            vertex_dim: self.vertex_dim,
            d_model: match self.input_kind {
                InputKind::Graph => self.d_ctx,
                InputKind::VectorSet => self.input_dim,
            },
        }
    }

    /// Register every parameter group the configuration activates.
    pub fn init_params(&self, seed: u64) -> Params {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::new();
        let k = self.vertex_dim;
        match self.input_kind {
            InputKind::Graph => {
                if self.ablation.uses_ttp() || self.ablation.uses_mefg() {
                    BackboneConfig {
                        vertex_dim: k,
                        gcn_layers: self.backbone_layers,
                        d_ctx: self.d_ctx,
                    }
                    .register(&mut params, "bb", &mut rng);
                }
                if self.ablation.uses_ttp() {
                    crate::ttp::register_graph_ttp(&mut params, "ttp", self.d_ctx, &mut rng);
                }
            }
            InputKind::VectorSet => {
                VfeConfig {
                    n_vertices: self.n_vertices,
                    ctx_dim: self.input_dim,
                    out_dim: k,
                }
                .register(&mut params, "vfe", &mut rng);
                // phase 1: two-layer MLP predictor on the extracted vertices
                let p1_in = self.phase_head_in_dim();
                for (name, shape) in [
                    ("p1.0.w", vec![p1_in, self.head_hidden]),
                    ("p1.1.w", vec![self.head_hidden, self.n_classes]),
                ] {
                    params.insert_init(name, shape, &mut rng).expect("unique");
                }
                for (name, cols) in [("p1.0.b", self.head_hidden), ("p1.1.b", self.n_classes)] {
                    params
                        .insert(name, Tensor::zeros(vec![1, cols]))
                        .expect("unique");
                }
                // phase 2: two-layer vanilla GCN plus a linear readout
                for l in 0..2 {
                    params
                        .insert_init(&format!("p2.gcn.{l}.w"), vec![k, k], &mut rng)
                        .expect("unique");
                }
                params
                    .insert_init("p2.head.w", vec![self.phase_head_in_dim(), self.n_classes], &mut rng)
                    .expect("unique");
                params
                    .insert("p2.head.b", Tensor::zeros(vec![1, self.n_classes]))
                    .expect("unique");
            }
        }
        if self.ablation.uses_mefg() {
            self.mefg().register(&mut params, "mefg", &mut rng);
        }
        self.gnn().register(&mut params, "gnn", &mut rng);
        HeadConfig {
            in_dim: self.head_in_dim(),
            hidden: self.head_hidden,
            n_classes: self.n_classes,
        }
        .register(&mut params, "head", &mut rng);
        params
    }

    fn phase_head_in_dim(&self) -> usize {
        match self.task {
            TaskKind::GraphClass | TaskKind::VertexClass => self.vertex_dim,
            TaskKind::LinkClass => 2 * self.vertex_dim,
        }
    }
}

fn check_task(cfg: &PipelineConfig, sample: &GraphSample) -> Result<(), PipelineError> {
    if sample.labels.kind() != cfg.task.name() {
        return Err(PipelineError::TaskMismatch {
            want: cfg.task.name(),
            got: sample.labels.kind(),
        });
    }
    if sample.n_vertices() != cfg.n_vertices {
        return Err(PipelineError::VertexCountMismatch {
            got: sample.n_vertices(),
            want: cfg.n_vertices,
        });
    }
    Ok(())
}

/// Ordered label pairs queried for a link sample, with their classes.
fn link_pairs(labels: &TaskLabels) -> (Vec<(usize, usize)>, Vec<usize>) {
    match labels {
        TaskLabels::LinkClass(map) => (map.keys().copied().collect(), map.values().copied().collect()),
        _ => (Vec::new(), Vec::new()),
    }
}

fn target_labels(labels: &TaskLabels) -> Vec<usize> {
    match labels {
        TaskLabels::GraphClass(c) => vec![*c],
        TaskLabels::VertexClass(v) => v.clone(),
        TaskLabels::LinkClass(map) => map.values().copied().collect(),
    }
}

/// Whether a forward pass participates in training (straight-through edge
/// weights active) or evaluation (binary topology).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// The intermediate graph built on the tape, before the GNN.
struct Enhanced {
    graph: TapeGraph,
    edge_dim: usize,
}

/// Basic adjacency for a sample under the configured rule.
fn effective_basic_adjacency(
    cfg: &PipelineConfig,
    sample: &GraphSample,
) -> Result<Tensor, Error> {
    match (cfg.input_kind, &cfg.gd_rule) {
        (InputKind::Graph, _) | (_, AdjacencyRule::Provided) => Ok(sample.adjacency.clone()),
        (InputKind::VectorSet, rule) => Ok(basic_adjacency(&sample.vertices, rule)?),
    }
}

/// Basic edge features lifted onto the (possibly expanded) adjacency:
/// stored features are kept, TTP-added edges get the unit value.
fn basic_edges_on(
    tape: &mut Tape,
    sample: &GraphSample,
    adjacency: &Tensor,
    edge_dim: usize,
) -> Result<BTreeMap<(usize, usize), Var>, Error> {
    let n = adjacency.shape[0];
    let mut out = BTreeMap::new();
    for i in 0..n {
        for j in 0..n {
            if adjacency.at2(i, j) != 1.0 {
                continue;
            }
            let data = match sample.edges.get(i, j) {
                Some(f) => f.to_vec(),
                None => vec![1.0; edge_dim],
            };
            out.insert((i, j), tape.constant(Tensor::new(vec![1, edge_dim], data)?));
        }
    }
    Ok(out)
}

/// Straight-through training weights: each selected edge carries its
/// probability `p[i, j]`, so the backward pass reaches the topology
/// parameters. Evaluation uses the binary adjacency instead.
fn straight_through_weights(
    tape: &mut Tape,
    prob: Var,
    adjacency: &Tensor,
) -> Result<BTreeMap<(usize, usize), Var>, Error> {
    let n = adjacency.shape[0];
    let flat = tape.reshape(prob, vec![n * n, 1])?;
    let mut out = BTreeMap::new();
    for i in 0..n {
        for j in 0..n {
            if adjacency.at2(i, j) == 1.0 {
                out.insert((i, j), tape.gather_rows(flat, &[i * n + j])?);
            }
        }
    }
    Ok(out)
}

fn build_enhanced(
    tape: &mut Tape,
    bound: &mut Bound,
    params: &Params,
    cfg: &PipelineConfig,
    sample: &GraphSample,
    mode: Mode,
) -> Result<Enhanced, Error> {
    check_task(cfg, sample)?;
    let basic_adj = effective_basic_adjacency(cfg, sample)?;
    match cfg.input_kind {
        InputKind::Graph => {
            let vertices = tape.constant(sample.vertices.clone());
            let needs_ctx = cfg.ablation.uses_ttp() || cfg.ablation.uses_mefg();
            let ctx = if needs_ctx {
                let bb = BackboneConfig {
                    vertex_dim: cfg.vertex_dim,
                    gcn_layers: cfg.backbone_layers,
                    d_ctx: cfg.d_ctx,
                };
                let xg = gcn_encode(tape, bound, params, &bb, "bb", sample)?;
                Some(global_context_cube(tape, bound, params, &bb, "bb", xg)?)
            } else {
                None
            };
            let (adjacency, prob) = if cfg.ablation.uses_ttp() {
                let prob = adjacency_prob(tape, bound, params, "ttp", ctx.as_ref().unwrap().var())?;
                let p_val = tape.value(prob.var).clone();
                (threshold_union(&p_val, &basic_adj, cfg.theta)?, Some(prob.var))
            } else {
                (basic_adj, None)
            };
            let (edges, edge_dim) = if cfg.ablation.uses_mefg() {
                let e = generate_edge_features(
                    tape,
                    bound,
                    params,
                    "mefg",
                    &adjacency,
                    vertices,
                    ctx.as_ref().unwrap(),
                )?;
                (e, cfg.vertex_dim)
            } else {
                (
                    basic_edges_on(tape, sample, &adjacency, cfg.basic_edge_dim)?,
                    cfg.basic_edge_dim,
                )
            };
            let edge_weights = match (cfg.straight_through && mode == Mode::Train, prob) {
                (true, Some(p)) => Some(straight_through_weights(tape, p, &adjacency)?),
                _ => None,
            };
            Ok(Enhanced {
                graph: TapeGraph {
                    vertices,
                    adjacency,
                    edges,
                    edge_weights,
                },
                edge_dim,
            })
        }
        InputKind::VectorSet => {
            let ctx = vector_set_context(tape, &sample.vertices)?;
            let vertices = vfe_extract(tape, bound, params, &ctx, "vfe")?;
            let adjacency = if cfg.ablation.uses_ttp() {
                let v_hat = tape.value(vertices).clone();
                let a_v = knn_vertex_adjacency(&v_hat, cfg.ttp_c)?;
                union(&a_v, &basic_adj)?
            } else {
                basic_adj
            };
            let (edges, edge_dim) = if cfg.ablation.uses_mefg() {
                let e = generate_edge_features(
                    tape, bound, params, "mefg", &adjacency, vertices, &ctx,
                )?;
                (e, cfg.vertex_dim)
            } else {
                (
                    basic_edges_on(tape, sample, &adjacency, cfg.basic_edge_dim)?,
                    cfg.basic_edge_dim,
                )
            };
            Ok(Enhanced {
                graph: TapeGraph {
                    vertices,
                    adjacency,
                    edges,
                    edge_weights: None,
                },
                edge_dim,
            })
        }
    }
}

/// Materialize the task-specific graph representation as a plain sample.
pub fn enhance(
    params: &Params,
    cfg: &PipelineConfig,
    sample: &GraphSample,
) -> Result<GraphSample, Error> {
    let mut tape = Tape::new();
    let mut bound = Bound::new();
    let enhanced = build_enhanced(&mut tape, &mut bound, params, cfg, sample, Mode::Eval)?;
    let mut edges = EdgeFeatureStore::new(enhanced.edge_dim);
    for (&(i, j), &v) in &enhanced.graph.edges {
        edges.insert(i, j, tape.value(v).data.clone());
    }
    Ok(GraphSample {
        vertices: tape.value(enhanced.graph.vertices).clone(),
        adjacency: enhanced.graph.adjacency.clone(),
        edges,
        labels: sample.labels.clone(),
    })
}

/// Full forward pass: logit rows plus, for link tasks, the queried pairs
/// in row order.
pub fn forward(
    tape: &mut Tape,
    bound: &mut Bound,
    params: &Params,
    cfg: &PipelineConfig,
    sample: &GraphSample,
    mode: Mode,
) -> Result<(Var, Vec<(usize, usize)>), Error> {
    let enhanced = build_enhanced(tape, bound, params, cfg, sample, mode)?;
    let gnn_cfg = cfg.gnn();
    let out = forward_gnn(tape, bound, params, "gnn", &gnn_cfg, &enhanced.graph)?;
    match cfg.task {
        TaskKind::GraphClass => Ok((
            graph_class_readout(tape, bound, params, "head", &out)?,
            Vec::new(),
        )),
        TaskKind::VertexClass => Ok((
            vertex_class_readout(tape, bound, params, "head", &out)?,
            Vec::new(),
        )),
        TaskKind::LinkClass => {
            let (pairs, _) = link_pairs(&sample.labels);
            let (logits, _flagged) = link_class_readout(
                tape,
                bound,
                params,
                "head",
                &out,
                &pairs,
                cfg.link_mode,
                cfg.post_gnn_edge_dim(),
            )?;
            Ok((logits, pairs))
        }
    }
}

/// Two-layer MLP used by the phase-1 head.
fn mlp2(
    tape: &mut Tape,
    bound: &mut Bound,
    params: &Params,
    prefix: &str,
    x: Var,
) -> Result<Var, Error> {
    let n = tape.shape(x)[0];
    let w0 = bound.var(tape, params, &format!("{prefix}.0.w"))?;
    let b0 = bound.var(tape, params, &format!("{prefix}.0.b"))?;
    let w1 = bound.var(tape, params, &format!("{prefix}.1.w"))?;
    let b1 = bound.var(tape, params, &format!("{prefix}.1.b"))?;
    let b0r = tape.repeat_rows(b0, n)?;
    let z = tape.matmul(x, w0)?;
    let z = tape.add(z, b0r)?;
    let h = tape.relu(z);
    let b1r = tape.repeat_rows(b1, n)?;
    let z = tape.matmul(h, w1)?;
    Ok(tape.add(z, b1r)?)
}

/// Assemble per-task readout input rows from vertex embeddings.
fn task_rows(
    tape: &mut Tape,
    cfg: &PipelineConfig,
    vertices: Var,
    labels: &TaskLabels,
) -> Result<Var, Error> {
    match cfg.task {
        TaskKind::GraphClass => {
            let pooled = tape.mean_axis(vertices, 0)?;
            let k = tape.shape(pooled)[0];
            Ok(tape.reshape(pooled, vec![1, k])?)
        }
        TaskKind::VertexClass => Ok(vertices),
        TaskKind::LinkClass => {
            let (pairs, _) = link_pairs(labels);
            let mut rows = Vec::with_capacity(pairs.len());
            for (i, j) in pairs {
                let vi = tape.gather_rows(vertices, &[i])?;
                let vj = tape.gather_rows(vertices, &[j])?;
                rows.push(tape.concat(&[vi, vj], 1)?);
            }
            Ok(tape.concat(&rows, 0)?)
        }
    }
}

/// Phase 1 of non-graph training: VFE plus a two-layer MLP predictor.
fn phase1_forward(
    tape: &mut Tape,
    bound: &mut Bound,
    params: &Params,
    cfg: &PipelineConfig,
    sample: &GraphSample,
) -> Result<Var, Error> {
    let ctx = vector_set_context(tape, &sample.vertices)?;
    let vertices = vfe_extract(tape, bound, params, &ctx, "vfe")?;
    let x = task_rows(tape, cfg, vertices, &sample.labels)?;
    mlp2(tape, bound, params, "p1", x)
}

/// Phase 2: the same VFE feeding a two-layer vanilla GCN over the knn-union
/// adjacency (recomputed from the current extracted vertices each forward
/// pass), then a linear readout.
fn phase2_forward(
    tape: &mut Tape,
    bound: &mut Bound,
    params: &Params,
    cfg: &PipelineConfig,
    sample: &GraphSample,
) -> Result<Var, Error> {
    let ctx = vector_set_context(tape, &sample.vertices)?;
    let vertices = vfe_extract(tape, bound, params, &ctx, "vfe")?;
    let basic = effective_basic_adjacency(cfg, sample)?;
    let v_hat = tape.value(vertices).clone();
    let a_v = knn_vertex_adjacency(&v_hat, cfg.ttp_c)?;
    let adjacency = union(&a_v, &basic)?;
    let a_norm = tape.constant(crate::backbone::normalized_adjacency(&adjacency));
    let mut h = vertices;
    for l in 0..2 {
        let w = bound.var(tape, params, &format!("p2.gcn.{l}.w"))?;
        let hw = tape.matmul(h, w)?;
        let z = tape.matmul(a_norm, hw)?;
        h = if l == 0 { tape.relu(z) } else { z };
    }
    let x = task_rows(tape, cfg, h, &sample.labels)?;
    let w = bound.var(tape, params, "p2.head.w")?;
    let b = bound.var(tape, params, "p2.head.b")?;
    let n = tape.shape(x)[0];
    let br = tape.repeat_rows(b, n)?;
    let z = tape.matmul(x, w)?;
    Ok(tape.add(z, br)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    One,
    Two,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub split: &'static str,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub lr_min: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// weight the loss by inverse class frequency
    pub class_weights: bool,
    /// phase-1 epoch budget for two-phase non-graph training (phase 2 uses
    /// the same, the remainder trains the full pipeline)
    pub phase1_epochs: usize,
}

impl TrainConfig {
    pub fn new(epochs: usize, lr: f64, seed: u64) -> Self {
        Self {
            epochs,
            batch: 8,
            lr,
            lr_min: lr * 0.01,
            weight_decay: 1e-4,
            seed,
            class_weights: false,
            phase1_epochs: epochs / 4,
        }
    }
}

fn dataset_class_weights(
    cfg: &PipelineConfig,
    tcfg: &TrainConfig,
    data: &[GraphSample],
) -> Option<Vec<f64>> {
    if !tcfg.class_weights {
        return None;
    }
    let all: Vec<usize> = data.iter().flat_map(|s| target_labels(&s.labels)).collect();
    Some(inverse_frequency_weights(&all, cfg.n_classes))
}

fn phase_forward(
    tape: &mut Tape,
    bound: &mut Bound,
    params: &Params,
    cfg: &PipelineConfig,
    sample: &GraphSample,
    phase: Phase,
) -> Result<Var, Error> {
    match phase {
        Phase::One => phase1_forward(tape, bound, params, cfg, sample),
        Phase::Two => phase2_forward(tape, bound, params, cfg, sample),
        Phase::Full => forward(tape, bound, params, cfg, sample, Mode::Train).map(|(l, _)| l),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_epochs(
    cfg: &PipelineConfig,
    tcfg: &TrainConfig,
    data: &[GraphSample],
    params: &mut Params,
    opt: &mut AdamW,
    phase: Phase,
    epochs: usize,
    epoch_offset: usize,
    logs: &mut Vec<EpochLog>,
) -> Result<(), Error> {
    if data.is_empty() {
        return Err(PipelineError::EmptyDataset.into());
    }
    let weights = dataset_class_weights(cfg, tcfg, data);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed ^ 0x5eed);
    for e in 0..epochs {
        let epoch = epoch_offset + e;
        opt.lr = cosine_schedule(tcfg.lr, tcfg.lr_min, epoch as u64, tcfg.epochs as u64);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(tcfg.batch) {
            params.zero_grad();
            for &idx in chunk {
                let sample = &data[idx];
                let mut tape = Tape::new();
                let mut bound = Bound::new();
                let logits = phase_forward(&mut tape, &mut bound, params, cfg, sample, phase)?;
                let labels = target_labels(&sample.labels);
                let loss =
                    cross_entropy(&mut tape, logits, &labels, weights.as_deref())?;
                let scaled = tape.mul_scalar(loss, 1.0 / chunk.len() as f64);
                epoch_loss += tape.value(loss).data[0] / data.len() as f64;
                tape.backward(scaled)?;
                bound.accumulate(&tape, params)?;
            }
            opt.step(params)?;
        }
        logs.push(EpochLog {
            epoch,
            split: "train",
            metric: "loss".into(),
            value: epoch_loss,
        });
    }
    Ok(())
}

/// Train the full pipeline (the only schedule for graph input).
pub fn train_full(
    cfg: &PipelineConfig,
    tcfg: &TrainConfig,
    data: &[GraphSample],
    params: &mut Params,
    opt: &mut AdamW,
) -> Result<Vec<EpochLog>, Error> {
    let mut logs = Vec::new();
    run_epochs(
        cfg, tcfg, data, params, opt, Phase::Full, tcfg.epochs, 0, &mut logs,
    )?;
    Ok(logs)
}

/// Two-phase schedule for vector-set input: phase 1 trains the VFE with an
/// MLP predictor, phase 2 re-trains it with a vanilla GCN over the knn
/// adjacency, and any remaining epoch budget trains the full pipeline.
pub fn train_nongraph_two_phase(
    cfg: &PipelineConfig,
    tcfg: &TrainConfig,
    data: &[GraphSample],
    params: &mut Params,
    opt: &mut AdamW,
) -> Result<Vec<EpochLog>, Error> {
    if cfg.input_kind != InputKind::VectorSet {
        return Err(PipelineError::NeedsVectorSet("two-phase training").into());
    }
    if data.is_empty() {
        return Err(PipelineError::EmptyDataset.into());
    }
    let e1 = tcfg.phase1_epochs.min(tcfg.epochs);
    let e2 = e1.min(tcfg.epochs - e1);
    let rest = tcfg.epochs - e1 - e2;
    let mut logs = Vec::new();
    run_epochs(cfg, tcfg, data, params, opt, Phase::One, e1, 0, &mut logs)?;
    run_epochs(cfg, tcfg, data, params, opt, Phase::Two, e2, e1, &mut logs)?;
    run_epochs(
        cfg,
        tcfg,
        data,
        params,
        opt,
        Phase::Full,
        rest,
        e1 + e2,
        &mut logs,
    )?;
    Ok(logs)
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub loss: f64,
    pub preds: Vec<usize>,
    pub labels: Vec<usize>,
    pub report: MetricReport,
}

/// Evaluate the full pipeline over a dataset. For binary link tasks the
/// report includes hits@k computed from the class-1 score margin.
pub fn evaluate(
    cfg: &PipelineConfig,
    params: &Params,
    data: &[GraphSample],
    hits_k: usize,
) -> Result<EvalOutcome, Error> {
    if data.is_empty() {
        return Err(PipelineError::EmptyDataset.into());
    }
    let mut preds = Vec::new();
    let mut labels = Vec::new();
    let mut loss = 0.0;
    let mut pos_scores = Vec::new();
    let mut neg_scores = Vec::new();
    for sample in data {
        let mut tape = Tape::new();
        let mut bound = Bound::new();
        let (logits, _) = forward(&mut tape, &mut bound, params, cfg, sample, Mode::Eval)?;
        let sample_labels = target_labels(&sample.labels);
        let l = cross_entropy(&mut tape, logits, &sample_labels, None)?;
        loss += tape.value(l).data[0] / data.len() as f64;
        let values = tape.value(logits).clone();
        preds.extend(argmax_rows(&values));
        if cfg.task == TaskKind::LinkClass && cfg.n_classes == 2 {
            for (row, &label) in sample_labels.iter().enumerate() {
                let margin = values.at2(row, 1) - values.at2(row, 0);
                if label == 1 {
                    pos_scores.push(margin);
                } else {
                    neg_scores.push(margin);
                }
            }
        }
        labels.extend(sample_labels);
    }
    let mut report = classification_report(&preds, &labels, cfg.n_classes)?;
    if !pos_scores.is_empty() && !neg_scores.is_empty() {
        report.hits_at_k = Some(metric_hits_at_k(&pos_scores, &neg_scores, hits_k)?);
    }
    Ok(EvalOutcome {
        loss,
        preds,
        labels,
        report,
    })
}
