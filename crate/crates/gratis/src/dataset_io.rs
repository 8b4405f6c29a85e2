//! Line-delimited dataset files: one JSON object per line with fields
//! `n`, `k`, `vertices`, `adjacency`, `edge_dim`, `edges`, `labels`.
//! Floats are written with 17 significant digits so round trips are
//! bit-exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde_json::Value;
use thiserror::Error;

use crate::graph::{EdgeFeatureStore, GraphSample, TaskLabels};
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum DatasetIoError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: malformed record in field '{field}'")]
    Malformed { line: usize, field: &'static str },
}

fn fmt_f64(v: f64) -> String {
    // 17 significant digits: enough to reconstruct any f64 exactly
    format!("{v:.16e}")
}

fn float_list(vals: &[f64]) -> String {
    let mut s = String::from("[");
    for (i, v) in vals.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(&fmt_f64(*v));
    }
    s.push(']');
    s
}

fn int_list(vals: impl Iterator<Item = usize>) -> String {
    let mut s = String::from("[");
    for (i, v) in vals.enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{v}");
    }
    s.push(']');
    s
}

fn sample_to_line(g: &GraphSample) -> String {
    let n = g.n_vertices();
    let k = g.vertex_dim();
    let mut line = String::new();
    let _ = write!(
        line,
        "{{\"n\":{n},\"k\":{k},\"vertices\":{},\"adjacency\":{},\"edge_dim\":{},",
        float_list(&g.vertices.data),
        int_list(g.adjacency.data.iter().map(|&a| a as usize)),
        g.edges.edge_dim
    );
    line.push_str("\"edges\":[");
    for (idx, ((i, j), feat)) in g.edges.iter().enumerate() {
        if idx > 0 {
            line.push(',');
        }
        let _ = write!(line, "[{i},{j},{}]", float_list(feat));
    }
    line.push_str("],\"labels\":");
    match &g.labels {
        TaskLabels::GraphClass(c) => {
            let _ = write!(line, "{{\"kind\":\"graph\",\"graph_label\":{c}}}");
        }
        TaskLabels::VertexClass(ls) => {
            let _ = write!(
                line,
                "{{\"kind\":\"vertex\",\"vertex_labels\":{}}}",
                int_list(ls.iter().copied())
            );
        }
        TaskLabels::LinkClass(ls) => {
            line.push_str("{\"kind\":\"link\",\"link_labels\":[");
            for (idx, (&(i, j), &c)) in ls.iter().enumerate() {
                if idx > 0 {
                    line.push(',');
                }
                let _ = write!(line, "[{i},{j},{c}]");
            }
            line.push_str("]}");
        }
    }
    line.push('}');
    line
}

pub fn write_dataset(samples: &[GraphSample], path: &Path) -> Result<(), DatasetIoError> {
    let mut out = String::new();
    for g in samples {
        out.push_str(&sample_to_line(g));
        out.push('\n');
    }
    let mut f = fs::File::create(path).map_err(|e| DatasetIoError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    f.write_all(out.as_bytes()).map_err(|e| DatasetIoError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn field<'a>(
    obj: &'a Value,
    name: &'static str,
    line: usize,
) -> Result<&'a Value, DatasetIoError> {
    obj.get(name)
        .ok_or(DatasetIoError::Malformed { line, field: name })
}

fn as_usize(v: &Value, name: &'static str, line: usize) -> Result<usize, DatasetIoError> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or(DatasetIoError::Malformed { line, field: name })
}

fn as_f64_list(
    v: &Value,
    name: &'static str,
    line: usize,
) -> Result<Vec<f64>, DatasetIoError> {
    v.as_array()
        .ok_or(DatasetIoError::Malformed { line, field: name })?
        .iter()
        .map(|x| {
            x.as_f64()
                .ok_or(DatasetIoError::Malformed { line, field: name })
        })
        .collect()
}

fn parse_line(text: &str, line: usize) -> Result<GraphSample, DatasetIoError> {
    let obj: Value = serde_json::from_str(text)
        .map_err(|_| DatasetIoError::Malformed { line, field: "record" })?;
    let n = as_usize(field(&obj, "n", line)?, "n", line)?;
    let k = as_usize(field(&obj, "k", line)?, "k", line)?;
    let vertices = as_f64_list(field(&obj, "vertices", line)?, "vertices", line)?;
    if vertices.len() != n * k {
        return Err(DatasetIoError::Malformed { line, field: "vertices" });
    }
    let adjacency = as_f64_list(field(&obj, "adjacency", line)?, "adjacency", line)?;
    if adjacency.len() != n * n {
        return Err(DatasetIoError::Malformed { line, field: "adjacency" });
    }
    let edge_dim = as_usize(field(&obj, "edge_dim", line)?, "edge_dim", line)?;
    let mut edges = EdgeFeatureStore::new(edge_dim);
    for e in field(&obj, "edges", line)?
        .as_array()
        .ok_or(DatasetIoError::Malformed { line, field: "edges" })?
    {
        let triple = e
            .as_array()
            .filter(|t| t.len() == 3)
            .ok_or(DatasetIoError::Malformed { line, field: "edges" })?;
        let i = as_usize(&triple[0], "edges", line)?;
        let j = as_usize(&triple[1], "edges", line)?;
        let feat = as_f64_list(&triple[2], "edges", line)?;
        if feat.len() != edge_dim {
            return Err(DatasetIoError::Malformed { line, field: "edges" });
        }
        edges.insert(i, j, feat);
    }
    let lab = field(&obj, "labels", line)?;
    let kind = field(lab, "kind", line)?
        .as_str()
        .ok_or(DatasetIoError::Malformed { line, field: "labels" })?;
    let labels = match kind {
        "graph" => TaskLabels::GraphClass(as_usize(
            field(lab, "graph_label", line)?,
            "labels",
            line,
        )?),
        "vertex" => {
            let ls = field(lab, "vertex_labels", line)?
                .as_array()
                .ok_or(DatasetIoError::Malformed { line, field: "labels" })?
                .iter()
                .map(|x| as_usize(x, "labels", line))
                .collect::<Result<Vec<_>, _>>()?;
            TaskLabels::VertexClass(ls)
        }
        "link" => {
            let mut map = BTreeMap::new();
            for e in field(lab, "link_labels", line)?
                .as_array()
                .ok_or(DatasetIoError::Malformed { line, field: "labels" })?
            {
                let triple = e
                    .as_array()
                    .filter(|t| t.len() == 3)
                    .ok_or(DatasetIoError::Malformed { line, field: "labels" })?;
                map.insert(
                    (
                        as_usize(&triple[0], "labels", line)?,
                        as_usize(&triple[1], "labels", line)?,
                    ),
                    as_usize(&triple[2], "labels", line)?,
                );
            }
            TaskLabels::LinkClass(map)
        }
        _ => return Err(DatasetIoError::Malformed { line, field: "labels" }),
    };
    let vertices = Tensor::new(vec![n, k], vertices)
        .map_err(|_| DatasetIoError::Malformed { line, field: "vertices" })?;
    let adjacency = Tensor::new(vec![n, n], adjacency)
        .map_err(|_| DatasetIoError::Malformed { line, field: "adjacency" })?;
    GraphSample::new(vertices, adjacency, edges, labels)
        .map_err(|_| DatasetIoError::Malformed { line, field: "record" })
}

pub fn read_dataset(path: &Path) -> Result<Vec<GraphSample>, DatasetIoError> {
    let f = fs::File::open(path).map_err(|e| DatasetIoError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let reader = BufReader::new(f);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let text = line.map_err(|e| DatasetIoError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        if text.trim().is_empty() {
            continue;
        }
        out.push(parse_line(&text, line_no)?);
    }
    Ok(out)
}
