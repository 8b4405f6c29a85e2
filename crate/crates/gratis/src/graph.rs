//! Graph data model: vertices, binary adjacency, directed per-edge feature
//! vectors, and task labels.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("permutation {0:?} is not a bijection on 0..{1}")]
    NotABijection(Vec<usize>, usize),
    #[error("vertices must be a rank-2 tensor, got shape {0:?}")]
    BadVertexShape(Vec<usize>),
    #[error("adjacency must be {n}x{n}, got shape {shape:?}")]
    BadAdjacencyShape { n: usize, shape: Vec<usize> },
}

/// Directed edge features keyed by ordered vertex pair. `(i, j)` and `(j, i)`
/// may hold distinct vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFeatureStore {
    pub edge_dim: usize,
    features: BTreeMap<(usize, usize), Vec<f64>>,
}

impl EdgeFeatureStore {
    pub fn new(edge_dim: usize) -> Self {
        EdgeFeatureStore {
            edge_dim,
            features: BTreeMap::new(),
        }
    }

    /// Unit-valued single-dimension edges on every 1-entry of `adjacency`.
    pub fn unit_edges(adjacency: &Tensor) -> Self {
        let n = adjacency.shape[0];
        let mut store = EdgeFeatureStore::new(1);
        for i in 0..n {
            for j in 0..n {
                if adjacency.at2(i, j) == 1.0 {
                    store.insert(i, j, vec![1.0]);
                }
            }
        }
        store
    }

    pub fn insert(&mut self, i: usize, j: usize, feature: Vec<f64>) {
        debug_assert_eq!(feature.len(), self.edge_dim);
        self.features.insert((i, j), feature);
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&[f64]> {
        self.features.get(&(i, j)).map(|v| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Deterministic (sorted) iteration over directed edges.
    pub fn iter(&self) -> impl Iterator<Item = (&(usize, usize), &Vec<f64>)> {
        self.features.iter()
    }

    pub fn keys(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.features.keys().copied()
    }
}

/// Labels for exactly one of the three task families.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskLabels {
    GraphClass(usize),
    VertexClass(Vec<usize>),
    LinkClass(BTreeMap<(usize, usize), usize>),
}

impl TaskLabels {
    pub fn kind(&self) -> &'static str {
        match self {
            TaskLabels::GraphClass(_) => "graph",
            TaskLabels::VertexClass(_) => "vertex",
            TaskLabels::LinkClass(_) => "link",
        }
    }
}

/// One graph-structured sample: N vertices of dimension K, binary adjacency
/// with zero diagonal, directed edge features, task labels.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSample {
    pub vertices: Tensor,
    pub adjacency: Tensor,
    pub edges: EdgeFeatureStore,
    pub labels: TaskLabels,
}

/// A named invariant violation found by [`GraphSample::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub rule: &'static str,
    pub indices: Vec<usize>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {:?}", self.rule, self.indices)
    }
}

impl GraphSample {
    pub fn new(
        vertices: Tensor,
        adjacency: Tensor,
        edges: EdgeFeatureStore,
        labels: TaskLabels,
    ) -> Result<Self, GraphError> {
        if vertices.rank() != 2 {
            return Err(GraphError::BadVertexShape(vertices.shape));
        }
        let n = vertices.shape[0];
        if adjacency.shape != vec![n, n] {
            return Err(GraphError::BadAdjacencyShape {
                n,
                shape: adjacency.shape,
            });
        }
        Ok(GraphSample {
            vertices,
            adjacency,
            edges,
            labels,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.shape[0]
    }

    pub fn vertex_dim(&self) -> usize {
        self.vertices.shape[1]
    }

    /// Report every type-invariant violation; never fails.
    pub fn validate(&self) -> Vec<Violation> {
        let n = self.n_vertices();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let a = self.adjacency.at2(i, j);
                if a != 0.0 && a != 1.0 {
                    out.push(Violation {
                        rule: "non-binary adjacency entry",
                        indices: vec![i, j],
                    });
                }
            }
            if self.adjacency.at2(i, i) != 0.0 {
                out.push(Violation {
                    rule: "nonzero diagonal",
                    indices: vec![i],
                });
            }
        }
        for ((i, j), feat) in self.edges.iter() {
            if *i >= n || *j >= n {
                out.push(Violation {
                    rule: "edge key out of range",
                    indices: vec![*i, *j],
                });
                continue;
            }
            if self.adjacency.at2(*i, *j) != 1.0 {
                out.push(Violation {
                    rule: "edge feature without adjacency",
                    indices: vec![*i, *j],
                });
            }
            if feat.len() != self.edges.edge_dim {
                out.push(Violation {
                    rule: "edge feature dimension mismatch",
                    indices: vec![*i, *j],
                });
            }
        }
        match &self.labels {
            TaskLabels::VertexClass(ls) if ls.len() != n => out.push(Violation {
                rule: "vertex label count mismatch",
                indices: vec![ls.len(), n],
            }),
            TaskLabels::LinkClass(ls) => {
                for &(i, j) in ls.keys() {
                    if i >= n || j >= n {
                        out.push(Violation {
                            rule: "link label key out of range",
                            indices: vec![i, j],
                        });
                    }
                }
            }
            _ => {}
        }
        out
    }

    /// Consistently relabel vertices, adjacency, edge keys, and labels.
    pub fn permute(&self, perm: &[usize]) -> Result<GraphSample, GraphError> {
        let n = self.n_vertices();
        let mut seen = vec![false; n];
        if perm.len() != n
            || perm.iter().any(|&p| {
                if p >= n || seen[p] {
                    true
                } else {
                    seen[p] = true;
                    false
                }
            })
        {
            return Err(GraphError::NotABijection(perm.to_vec(), n));
        }
        let k = self.vertex_dim();
        let mut vdata = vec![0.0; n * k];
        let mut adata = vec![0.0; n * n];
        // perm[i] = new position of old vertex i
        for i in 0..n {
            let ni = perm[i];
            vdata[ni * k..(ni + 1) * k].copy_from_slice(self.vertices.row(i));
            for j in 0..n {
                adata[ni * n + perm[j]] = self.adjacency.at2(i, j);
            }
        }
        let mut edges = EdgeFeatureStore::new(self.edges.edge_dim);
        for ((i, j), feat) in self.edges.iter() {
            edges.insert(perm[*i], perm[*j], feat.clone());
        }
        let labels = match &self.labels {
            TaskLabels::GraphClass(c) => TaskLabels::GraphClass(*c),
            TaskLabels::VertexClass(ls) => {
                let mut out = vec![0; n];
                for (i, &l) in ls.iter().enumerate() {
                    out[perm[i]] = l;
                }
                TaskLabels::VertexClass(out)
            }
            TaskLabels::LinkClass(ls) => TaskLabels::LinkClass(
                ls.iter()
                    .map(|(&(i, j), &l)| ((perm[i], perm[j]), l))
                    .collect(),
            ),
        };
        GraphSample::new(
            Tensor::new(vec![n, k], vdata).expect("permuted vertex buffer"),
            Tensor::new(vec![n, n], adata).expect("permuted adjacency buffer"),
            edges,
            labels,
        )
    }
}
