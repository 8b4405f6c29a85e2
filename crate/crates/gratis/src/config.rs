//! Plain-text run configuration: one `key = value` per line, `#` comments,
//! unknown keys rejected. Every key has a documented default (see
//! [`RunConfig::default`] and the `KEYS` table).

use std::path::Path;

use crate::datagen::{
    gen_binary_links, gen_cooccur_links, gen_graph_class, gen_sbm, BinaryLinksConfig,
    CoOccurConfig, GraphClassConfig, SbmConfig,
};
use crate::gd::{AdjacencyRule, KnnMetric};
use crate::gnn::{GnnKind, LinkMode};
use crate::graph::GraphSample;
use crate::pipeline::{Ablation, InputKind, PipelineConfig, TaskKind, TrainConfig};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: unknown configuration key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("line {line}: bad value `{value}` for key `{key}` ({expected})")]
    BadValue {
        key: String,
        value: String,
        line: usize,
        expected: &'static str,
    },
    #[error("line {line}: expected `key = value`")]
    Malformed { line: usize },
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Synthetic task family; fixes input kind, task kind, and class count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskFamily {
    /// stochastic block model, vertex classification on graph input
    Sbm,
    /// two-class whole-graph classification on graph input
    GraphClass,
    /// four-class co-occurrence link prediction on vector-set input
    Cooccur,
    /// binary link prediction on graph input
    BinaryLinks,
}

/// Key/default/description for every accepted configuration key.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("task", "sbm", "task family: sbm | graph-class | cooccur | binary-links"),
    ("train_data", "", "path of the training dataset (JSON lines)"),
    ("eval_data", "", "path of the evaluation dataset"),
    ("out", ".", "output directory"),
    ("seed", "0", "global random seed"),
    ("epochs", "50", "total epoch budget"),
    ("batch", "8", "batch size"),
    ("lr", "0.02", "initial learning rate"),
    ("lr_min", "0.0002", "final learning rate of the cosine schedule"),
    ("weight_decay", "0.0001", "decoupled weight decay"),
    ("class_weights", "false", "weight the loss by inverse class frequency"),
    ("ablation", "ttp-mefg", "baseline | ttp | mefg | ttp-mefg"),
    ("mefg.enabled", "true", "disable to drop learned edge features from the ablation"),
    ("model.vertex_dim", "0", "vertex feature width K; 0 = derive from the task"),
    ("backbone.layers", "2", "GCN depth of the shared backbone"),
    ("backbone.d_ctx", "4", "channel count D of the context cube"),
    ("gd.rule", "provided", "basic adjacency rule: provided | full | knn"),
    ("gd.metric", "l2", "knn metric: l1 | l2 | mahalanobis"),
    ("gd.c", "3", "neighbor count of the basic knn rule"),
    ("ttp.theta", "0.5", "threshold on the adjacency probabilities"),
    ("ttp.c", "3", "neighbor count of the learned vertex adjacency"),
    ("ttp.straight_through", "true", "train topology parameters through edge multipliers"),
    ("ttp.phase1_epochs", "0", "phase-1 budget of two-phase training; 0 = epochs/4"),
    ("gnn.kind", "gated", "predictor layer: gated | gat"),
    ("gnn.layers", "2", "predictor depth"),
    ("gnn.link_mode", "vertices-plus-edge", "link head input: vertices | edge | vertices-plus-edge"),
    ("head.hidden", "16", "hidden width of the readout MLP"),
    ("eval.hits_k", "10", "k of the hits@k link metric"),
    ("data.n_vertices", "12", "vertices per generated sample"),
    ("data.n_samples", "100", "generated sample count"),
    ("data.noise", "0.3", "feature noise level"),
    ("data.p_in", "0.8", "within-community edge probability (sbm)"),
    ("data.p_out", "0.1", "between-community edge probability (sbm)"),
    ("data.communities", "2", "community count (sbm)"),
    ("data.coupling", "0.0", "uniform pairwise activation coupling (cooccur)"),
    ("data.p_active", "0.5", "marginal activation probability (cooccur)"),
    ("data.feature_dim", "4", "raw feature width of generated vertices"),
    ("data.n_positive", "2", "positive neighbors per vertex (binary-links)"),
    ("data.knn_c", "3", "knn degree of generated basic adjacencies"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: TaskFamily,
    pub train_data: String,
    pub eval_data: String,
    pub out: String,
    pub seed: u64,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub lr_min: f64,
    pub weight_decay: f64,
    pub class_weights: bool,
    pub ablation: Ablation,
    pub mefg_enabled: bool,
    pub vertex_dim: usize,
    pub backbone_layers: usize,
    pub d_ctx: usize,
    pub gd_rule: String,
    pub gd_metric: KnnMetric,
    pub gd_c: usize,
    pub theta: f64,
    pub ttp_c: usize,
    pub straight_through: bool,
    pub phase1_epochs: usize,
    pub gnn_kind: GnnKind,
    pub gnn_layers: usize,
    pub link_mode: LinkMode,
    pub head_hidden: usize,
    pub hits_k: usize,
    pub data_n_vertices: usize,
    pub data_n_samples: usize,
    pub data_noise: f64,
    pub data_p_in: f64,
    pub data_p_out: f64,
    pub data_communities: usize,
    pub data_coupling: f64,
    pub data_p_active: f64,
    pub data_feature_dim: usize,
    pub data_n_positive: usize,
    pub data_knn_c: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: TaskFamily::Sbm,
            train_data: String::new(),
            eval_data: String::new(),
            out: ".".into(),
            seed: 0,
            epochs: 50,
            batch: 8,
            lr: 0.02,
            lr_min: 0.0002,
            weight_decay: 1e-4,
            class_weights: false,
            ablation: Ablation::TtpMefg,
            mefg_enabled: true,
            vertex_dim: 0,
            backbone_layers: 2,
            d_ctx: 4,
            gd_rule: "provided".into(),
            gd_metric: KnnMetric::L2,
            gd_c: 3,
            theta: 0.5,
            ttp_c: 3,
            straight_through: true,
            phase1_epochs: 0,
            gnn_kind: GnnKind::Gated,
            gnn_layers: 2,
            link_mode: LinkMode::VerticesPlusEdge,
            head_hidden: 16,
            hits_k: 10,
            data_n_vertices: 12,
            data_n_samples: 100,
            data_noise: 0.3,
            data_p_in: 0.8,
            data_p_out: 0.1,
            data_communities: 2,
            data_coupling: 0.0,
            data_p_active: 0.5,
            data_feature_dim: 4,
            data_n_positive: 2,
            data_knn_c: 3,
        }
    }
}

fn bad<'a>(
    key: &str,
    value: &str,
    line: usize,
    expected: &'static str,
) -> ConfigError {
    ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        line,
        expected,
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or(ConfigError::Malformed { line })?;
            cfg.set(key.trim(), value.trim(), line)?;
        }
        Ok(cfg)
    }

    pub fn parse_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        macro_rules! num {
            ($expected:literal) => {
                value.parse().map_err(|_| bad(key, value, line, $expected))?
            };
        }
        let flag = |v: &str| match v {
            "true" | "on" | "1" => Ok(true),
            "false" | "off" | "0" => Ok(false),
            _ => Err(bad(key, v, line, "true | false")),
        };
        match key {
            "task" => {
                self.task = match value {
                    "sbm" => TaskFamily::Sbm,
                    "graph-class" => TaskFamily::GraphClass,
                    "cooccur" => TaskFamily::Cooccur,
                    "binary-links" => TaskFamily::BinaryLinks,
                    _ => return Err(bad(key, value, line, "sbm | graph-class | cooccur | binary-links")),
                }
            }
            "train_data" => self.train_data = value.into(),
            "eval_data" => self.eval_data = value.into(),
            "out" => self.out = value.into(),
            "seed" => self.seed = num!("unsigned integer"),
            "epochs" => self.epochs = num!("unsigned integer"),
            "batch" => self.batch = num!("unsigned integer"),
            "lr" => self.lr = num!("float"),
            "lr_min" => self.lr_min = num!("float"),
            "weight_decay" => self.weight_decay = num!("float"),
            "class_weights" => self.class_weights = flag(value)?,
            "ablation" => {
                self.ablation = match value {
                    "baseline" => Ablation::Baseline,
                    "ttp" => Ablation::TtpOnly,
                    "mefg" => Ablation::MefgOnly,
                    "ttp-mefg" => Ablation::TtpMefg,
                    _ => return Err(bad(key, value, line, "baseline | ttp | mefg | ttp-mefg")),
                }
            }
            "mefg.enabled" => self.mefg_enabled = flag(value)?,
            "model.vertex_dim" => self.vertex_dim = num!("unsigned integer"),
            "backbone.layers" => self.backbone_layers = num!("unsigned integer"),
            "backbone.d_ctx" => self.d_ctx = num!("unsigned integer"),
            "gd.rule" => match value {
                "provided" | "full" | "knn" => self.gd_rule = value.into(),
                _ => return Err(bad(key, value, line, "provided | full | knn")),
            },
            "gd.metric" => {
                self.gd_metric = match value {
                    "l1" => KnnMetric::L1,
                    "l2" => KnnMetric::L2,
                    "mahalanobis" => KnnMetric::Mahalanobis,
                    _ => return Err(bad(key, value, line, "l1 | l2 | mahalanobis")),
                }
            }
            "gd.c" => self.gd_c = num!("unsigned integer"),
            "ttp.theta" => self.theta = num!("float"),
            "ttp.c" => self.ttp_c = num!("unsigned integer"),
            "ttp.straight_through" => self.straight_through = flag(value)?,
            "ttp.phase1_epochs" => self.phase1_epochs = num!("unsigned integer"),
            "gnn.kind" => {
                self.gnn_kind = match value {
                    "gated" => GnnKind::Gated,
                    "gat" => GnnKind::Gat,
                    _ => return Err(bad(key, value, line, "gated | gat")),
                }
            }
            "gnn.layers" => self.gnn_layers = num!("unsigned integer"),
            "gnn.link_mode" => {
                self.link_mode = match value {
                    "vertices" => LinkMode::Vertices,
                    "edge" => LinkMode::Edge,
                    "vertices-plus-edge" => LinkMode::VerticesPlusEdge,
                    _ => return Err(bad(key, value, line, "vertices | edge | vertices-plus-edge")),
                }
            }
            "head.hidden" => self.head_hidden = num!("unsigned integer"),
            "eval.hits_k" => self.hits_k = num!("unsigned integer"),
            "data.n_vertices" => self.data_n_vertices = num!("unsigned integer"),
            "data.n_samples" => self.data_n_samples = num!("unsigned integer"),
            "data.noise" => self.data_noise = num!("float"),
            "data.p_in" => self.data_p_in = num!("float"),
            "data.p_out" => self.data_p_out = num!("float"),
            "data.communities" => self.data_communities = num!("unsigned integer"),
            "data.coupling" => self.data_coupling = num!("float"),
            "data.p_active" => self.data_p_active = num!("float"),
            "data.feature_dim" => self.data_feature_dim = num!("unsigned integer"),
            "data.n_positive" => self.data_n_positive = num!("unsigned integer"),
            "data.knn_c" => self.data_knn_c = num!("unsigned integer"),
            _ => {
                return Err(ConfigError::UnknownKey {
                    key: key.into(),
                    line,
                })
            }
        }
        Ok(())
    }

    pub fn input_kind(&self) -> InputKind {
        match self.task {
            TaskFamily::Cooccur => InputKind::VectorSet,
            _ => InputKind::Graph,
        }
    }

    pub fn task_kind(&self) -> TaskKind {
        match self.task {
            TaskFamily::Sbm => TaskKind::VertexClass,
            TaskFamily::GraphClass => TaskKind::GraphClass,
            TaskFamily::Cooccur | TaskFamily::BinaryLinks => TaskKind::LinkClass,
        }
    }

    pub fn n_classes(&self) -> usize {
        match self.task {
            TaskFamily::Sbm => self.data_communities,
            TaskFamily::GraphClass => 2,
            TaskFamily::Cooccur => 4,
            TaskFamily::BinaryLinks => 2,
        }
    }

    /// Width of the raw vertex features the generators emit.
    pub fn raw_feature_dim(&self) -> usize {
        match self.task {
            TaskFamily::Sbm => self.data_communities,
            TaskFamily::GraphClass | TaskFamily::Cooccur => self.data_feature_dim,
            TaskFamily::BinaryLinks => 2,
        }
    }

    /// K: forced to the raw width for graph input, free for vector sets.
    pub fn effective_vertex_dim(&self) -> usize {
        match self.input_kind() {
            InputKind::Graph => self.raw_feature_dim(),
            InputKind::VectorSet => {
                if self.vertex_dim == 0 {
                    4
                } else {
                    self.vertex_dim
                }
            }
        }
    }

    fn effective_ablation(&self) -> Ablation {
        if self.mefg_enabled {
            self.ablation
        } else {
            match self.ablation {
                Ablation::TtpMefg => Ablation::TtpOnly,
                Ablation::MefgOnly => Ablation::Baseline,
                other => other,
            }
        }
    }

    fn adjacency_rule(&self) -> AdjacencyRule {
        match self.gd_rule.as_str() {
            "full" => AdjacencyRule::FullyConnected,
            "knn" => AdjacencyRule::Knn {
                metric: self.gd_metric,
                c: self.gd_c,
            },
            _ => AdjacencyRule::Provided,
        }
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            input_kind: self.input_kind(),
            task: self.task_kind(),
            ablation: self.effective_ablation(),
            vertex_dim: self.effective_vertex_dim(),
            n_vertices: self.data_n_vertices,
            input_dim: self.raw_feature_dim(),
            basic_edge_dim: 1,
            n_classes: self.n_classes(),
            backbone_layers: self.backbone_layers,
            d_ctx: self.d_ctx,
            gd_rule: self.adjacency_rule(),
            theta: self.theta,
            ttp_c: self.ttp_c,
            straight_through: self.straight_through,
            gnn_kind: self.gnn_kind,
            gnn_layers: self.gnn_layers,
            link_mode: self.link_mode,
            head_hidden: self.head_hidden,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch: self.batch,
            lr: self.lr,
            lr_min: self.lr_min,
            weight_decay: self.weight_decay,
            seed: self.seed,
            class_weights: self.class_weights,
            phase1_epochs: if self.phase1_epochs == 0 {
                self.epochs / 4
            } else {
                self.phase1_epochs
            },
        }
    }

    /// Generate a dataset of the configured family with the given seed.
    pub fn generate(&self, seed: u64, n_samples: usize) -> Vec<GraphSample> {
        match self.task {
            TaskFamily::Sbm => gen_sbm(&SbmConfig {
                n_vertices: self.data_n_vertices,
                n_communities: self.data_communities,
                p_in: self.data_p_in,
                p_out: self.data_p_out,
                feature_noise: self.data_noise,
                n_samples,
                seed,
            }),
            TaskFamily::GraphClass => gen_graph_class(&GraphClassConfig {
                n_vertices: self.data_n_vertices,
                feature_dim: self.data_feature_dim,
                feature_noise: self.data_noise,
                knn_c: self.data_knn_c,
                n_samples,
                seed,
            }),
            TaskFamily::Cooccur => {
                let n = self.data_n_vertices;
                let mut coupling = vec![self.data_coupling; n * n];
                for i in 0..n {
                    coupling[i * n + i] = 0.0;
                }
                gen_cooccur_links(&CoOccurConfig {
                    n_vertices: n,
                    coupling,
                    p_active: self.data_p_active,
                    feature_dim: self.data_feature_dim,
                    feature_noise: self.data_noise,
                    n_samples,
                    seed,
                })
            }
            TaskFamily::BinaryLinks => gen_binary_links(&BinaryLinksConfig {
                n_vertices: self.data_n_vertices,
                n_positive: self.data_n_positive,
                knn_c: self.data_knn_c,
                n_samples,
                seed,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_table() {
        let cfg = RunConfig::default();
        let from_keys = {
            let text: String = KEYS
                .iter()
                .filter(|(_, default, _)| !default.is_empty())
                .map(|(key, default, _)| format!("{key} = {default}\n"))
                .collect();
            RunConfig::parse(&text).unwrap()
        };
        assert_eq!(cfg, from_keys);
    }

    #[test]
    fn parse_overrides_and_comments() {
        let cfg = RunConfig::parse(
            "# a comment\n\
             task = cooccur\n\
             \n\
             lr = 0.5  # trailing comment\n\
             gnn.kind = gat\n\
             ttp.straight_through = off\n",
        )
        .unwrap();
        assert_eq!(cfg.task, TaskFamily::Cooccur);
        assert_eq!(cfg.lr, 0.5);
        assert_eq!(cfg.gnn_kind, GnnKind::Gat);
        assert!(!cfg.straight_through);
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let err = RunConfig::parse("seed = 3\nnot_a_key = 1\n").unwrap_err();
        match err {
            ConfigError::UnknownKey { key, line } => {
                assert_eq!(key, "not_a_key");
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(matches!(
            RunConfig::parse("epochs = many").unwrap_err(),
            ConfigError::BadValue { .. }
        ));
        assert!(matches!(
            RunConfig::parse("task = mnist").unwrap_err(),
            ConfigError::BadValue { .. }
        ));
        assert!(matches!(
            RunConfig::parse("just a line").unwrap_err(),
            ConfigError::Malformed { line: 1 }
        ));
    }

    #[test]
    fn derived_pipeline_settings() {
        let mut cfg = RunConfig::parse("task = sbm\ndata.communities = 3\n").unwrap();
        let p = cfg.pipeline_config();
        assert_eq!(p.input_kind, InputKind::Graph);
        assert_eq!(p.n_classes, 3);
        assert_eq!(p.vertex_dim, 3); // one-hot width

        cfg = RunConfig::parse("task = cooccur\nmodel.vertex_dim = 5\ndata.feature_dim = 7\n")
            .unwrap();
        let p = cfg.pipeline_config();
        assert_eq!(p.input_kind, InputKind::VectorSet);
        assert_eq!(p.vertex_dim, 5);
        assert_eq!(p.input_dim, 7);
        assert_eq!(p.n_classes, 4);
    }

    #[test]
    fn mefg_toggle_downgrades_ablation() {
        let cfg = RunConfig::parse("ablation = ttp-mefg\nmefg.enabled = false\n").unwrap();
        assert_eq!(cfg.pipeline_config().ablation, Ablation::TtpOnly);
        let cfg = RunConfig::parse("ablation = mefg\nmefg.enabled = false\n").unwrap();
        assert_eq!(cfg.pipeline_config().ablation, Ablation::Baseline);
    }

    #[test]
    fn phase1_auto_default() {
        let cfg = RunConfig::parse("epochs = 40\n").unwrap();
        assert_eq!(cfg.train_config().phase1_epochs, 10);
        let cfg = RunConfig::parse("epochs = 40\nttp.phase1_epochs = 3\n").unwrap();
        assert_eq!(cfg.train_config().phase1_epochs, 3);
    }

    #[test]
    fn generation_dispatch_matches_family() {
        let cfg = RunConfig::parse("task = binary-links\ndata.n_vertices = 8\n").unwrap();
        let samples = cfg.generate(5, 3);
        assert_eq!(samples.len(), 3);
        assert_eq!(samples[0].labels.kind(), "link");
        assert_eq!(samples[0].vertex_dim(), cfg.raw_feature_dim());
    }
}
