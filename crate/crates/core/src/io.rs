//! Graph files: a JSON document plus one CSV file per weight matrix and
//! bias vector.
//!
//! ```text
//! {
//!   "format": "unrectify-graph",
//!   "version": 1,
//!   "input": "x",
//!   "input_dim": 2,
//!   "output": "y",
//!   "nodes": [{"id": "x", "combine": "concat"}, ...],
//!   "arcs": [
//!     {"from": "x", "to": "y", "port": 0,
//!      "op": {"kind": "activation_affine", "act": {"type": "relu"},
//!             "weight": "g.weights/arc0000_weight.csv",
//!             "bias": "g.weights/arc0000_bias.csv"}}
//!   ]
//! }
//! ```
//!
//! Paths are relative to the JSON file. Weight CSVs hold one matrix row per
//! line; bias CSVs hold one value per line. Numbers are written in shortest
//! round-trip form, so save/load/save is byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dag::{Arc, Combine, DagError, DagNet};
use crate::ops::{Activation, ArcOp, Transform};

pub const FORMAT: &str = "unrectify-graph";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GraphIoError {
    #[error("{path}:{line}:{column}: {message}")]
    ParseError { path: String, line: usize, column: usize, message: String },
    #[error("missing weight file {0}")]
    MissingWeights(String),
    #[error("unsupported graph format {0}")]
    Format(String),
    #[error(transparent)]
    Graph(#[from] DagError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDoc {
    format: String,
    version: u32,
    input: String,
    input_dim: usize,
    output: String,
    nodes: Vec<NodeDoc>,
    arcs: Vec<ArcDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    id: String,
    combine: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArcDoc {
    from: String,
    to: String,
    port: usize,
    op: OpDoc,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum OpDoc {
    Identity,
    Linear { weight: String },
    Affine { weight: String, bias: String },
    Activation { act: Activation },
    ActivationAffine { act: Activation, weight: String, bias: String },
    Transform { sigma: Transform },
    TransformAffine { sigma: Transform, weight: String, bias: String },
}

fn rel(dir_name: &str, arc: usize, what: &str) -> String {
    format!("{dir_name}/arc{arc:04}_{what}.csv")
}

fn fmt_row<'a>(xs: impl Iterator<Item = &'a f64>) -> String {
    xs.map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

fn write_matrix(path: &Path, w: &Array2<f64>) -> std::io::Result<()> {
    let mut s = String::new();
    for row in w.outer_iter() {
        s.push_str(&fmt_row(row.iter()));
        s.push('\n');
    }
    fs::write(path, s)
}

fn write_vector(path: &Path, b: &Array1<f64>) -> std::io::Result<()> {
    let mut s = String::new();
    for x in b {
        s.push_str(&format!("{x:?}\n"));
    }
    fs::write(path, s)
}

/// Writes `net` to `path` and its weights under `<stem>.weights/`.
pub fn save_graph(net: &DagNet, path: &Path) -> Result<(), GraphIoError> {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("graph");
    let dir_name = format!("{stem}.weights");
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let dir = base.join(&dir_name);
    if net.arcs().iter().any(|a| a.op.weight().is_some()) {
        fs::create_dir_all(&dir)?;
    }
    let mut arcs = Vec::with_capacity(net.arcs().len());
    for (i, a) in net.arcs().iter().enumerate() {
        let mut weight = String::new();
        let mut bias = String::new();
        if let Some(w) = a.op.weight() {
            weight = rel(&dir_name, i, "weight");
            write_matrix(&base.join(&weight), w)?;
        }
        if let Some(b) = a.op.bias() {
            bias = rel(&dir_name, i, "bias");
            write_vector(&base.join(&bias), b)?;
        }
        let op = match &a.op {
            ArcOp::Identity => OpDoc::Identity,
            ArcOp::Linear { .. } => OpDoc::Linear { weight },
            ArcOp::Affine { .. } => OpDoc::Affine { weight, bias },
            ArcOp::Activation(act) => OpDoc::Activation { act: act.clone() },
            ArcOp::ActivationAffine { act, .. } => OpDoc::ActivationAffine { act: act.clone(), weight, bias },
            ArcOp::Transform(sigma) => OpDoc::Transform { sigma: sigma.clone() },
            ArcOp::TransformAffine { sigma, .. } => {
                OpDoc::TransformAffine { sigma: sigma.clone(), weight, bias }
            }
        };
        arcs.push(ArcDoc { from: a.from.clone(), to: a.to.clone(), port: a.port, op });
    }
    let doc = GraphDoc {
        format: FORMAT.into(),
        version: VERSION,
        input: net.input().into(),
        input_dim: net.input_dim(),
        output: net.output().into(),
        nodes: net
            .node_ids()
            .iter()
            .map(|id| NodeDoc { id: id.clone(), combine: net.combine(id).unwrap_or_default().as_str().into() })
            .collect(),
        arcs,
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("serializable");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn csv_error(path: &Path, line: usize, message: String) -> GraphIoError {
    GraphIoError::ParseError { path: path.display().to_string(), line, column: 0, message }
}

fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>, GraphIoError> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => GraphIoError::MissingWeights(path.display().to_string()),
        _ => GraphIoError::Io(e),
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, k + 1, e.to_string()))?;
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|e| csv_error(path, k + 1, format!("{f:?}: {e}"))))
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Reads a dense matrix CSV (one row per line).
pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>, GraphIoError> {
    let rows = read_rows(path)?;
    let cols = rows.first().map_or(0, |r| r.len());
    if let Some(k) = rows.iter().position(|r| r.len() != cols) {
        return Err(csv_error(path, k + 1, format!("expected {cols} fields, found {}", rows[k].len())));
    }
    let n = rows.len();
    Ok(Array2::from_shape_vec((n, cols), rows.concat()).expect("rectangular"))
}

fn read_vector(path: &Path) -> Result<Array1<f64>, GraphIoError> {
    let rows = read_rows(path)?;
    if let Some(k) = rows.iter().position(|r| r.len() != 1) {
        return Err(csv_error(path, k + 1, "expected one value per line".into()));
    }
    Ok(rows.concat().into())
}

pub fn load_graph(path: &Path) -> Result<DagNet, GraphIoError> {
    let text = fs::read_to_string(path)?;
    let doc: GraphDoc = serde_json::from_str(&text).map_err(|e| GraphIoError::ParseError {
        path: path.display().to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if doc.format != FORMAT || doc.version != VERSION {
        return Err(GraphIoError::Format(format!("{} v{}", doc.format, doc.version)));
    }
    let base: PathBuf = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let nodes = doc
        .nodes
        .iter()
        .map(|n| {
            let c = match n.combine.as_str() {
                "concat" => Combine::Concat,
                "sum" => Combine::Sum,
                other => {
                    return Err(GraphIoError::Format(format!("node {}: unknown combine {other}", n.id)))
                }
            };
            Ok((n.id.clone(), c))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let m = |p: &str| read_matrix_csv(&base.join(p));
    let v = |p: &str| read_vector(&base.join(p));
    let mut arcs = Vec::with_capacity(doc.arcs.len());
    for a in doc.arcs {
        let op = match a.op {
            OpDoc::Identity => ArcOp::Identity,
            OpDoc::Linear { weight } => ArcOp::Linear { weight: m(&weight)? },
            OpDoc::Affine { weight, bias } => ArcOp::Affine { weight: m(&weight)?, bias: v(&bias)? },
            OpDoc::Activation { act } => ArcOp::Activation(act),
            OpDoc::ActivationAffine { act, weight, bias } => {
                ArcOp::ActivationAffine { act, weight: m(&weight)?, bias: v(&bias)? }
            }
            OpDoc::Transform { sigma } => ArcOp::Transform(sigma),
            OpDoc::TransformAffine { sigma, weight, bias } => {
                ArcOp::TransformAffine { sigma, weight: m(&weight)?, bias: v(&bias)? }
            }
        };
        arcs.push(Arc { from: a.from, to: a.to, port: a.port, op });
    }
    let net = DagNet::from_parts(&doc.input, doc.input_dim, nodes, arcs)?;
    if net.output() != doc.output {
        return Err(GraphIoError::Format(format!(
            "declared output {} but the graph's sink is {}",
            doc.output,
            net.output()
        )));
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::{build_attention_toy, build_resnet_block};
    use crate::ops::CpwlSpec;
    use crate::dag::DagBuilder;
    use ndarray::array;

    #[test]
    fn round_trip_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let w = array![[0.1, -2.5], [1e-300, 3.0]];
        let net = build_resnet_block(&w, &array![0.3, 0.0], &w, &array![-0.7, 1.0 / 3.0]).unwrap();
        let p1 = dir.path().join("a.json");
        save_graph(&net, &p1).unwrap();
        let loaded = load_graph(&p1).unwrap();
        assert_eq!(loaded, net);
        let p2 = dir.path().join("b.json");
        save_graph(&loaded, &p2).unwrap();
        let t1 = fs::read_to_string(&p1).unwrap().replace("a.weights", "X");
        let t2 = fs::read_to_string(&p2).unwrap().replace("b.weights", "X");
        assert_eq!(t1, t2);
        let w1 = fs::read(dir.path().join("a.weights/arc0000_weight.csv")).unwrap();
        let w2 = fs::read(dir.path().join("b.weights/arc0000_weight.csv")).unwrap();
        assert_eq!(w1, w2);
    }

    #[test]
    fn ops_without_weights_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = DagBuilder::new("x", 2);
        b.add_arc("x", "y", ArcOp::Activation(Activation::Cpwl(CpwlSpec::abs()))).unwrap();
        let net = b.freeze().unwrap();
        let p = dir.path().join("g.json");
        save_graph(&net, &p).unwrap();
        assert_eq!(load_graph(&p).unwrap(), net);
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.contains("\"type\": \"cpwl\""));

        let e = Array2::eye(2);
        let att = build_attention_toy(&e, &e, &e, 2.0, 3).unwrap();
        let p = dir.path().join("att.json");
        save_graph(&att, &p).unwrap();
        assert_eq!(load_graph(&p).unwrap(), att);
    }

    #[test]
    fn truncated_json() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.json");
        fs::write(&p, "{\"format\": \"unrectify-graph\",\n \"nodes\": [").unwrap();
        match load_graph(&p) {
            Err(GraphIoError::ParseError { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dangling_weights() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = DagBuilder::new("x", 1);
        b.add_arc("x", "y", ArcOp::linear(array![[2.0]])).unwrap();
        let p = dir.path().join("g.json");
        save_graph(&b.freeze().unwrap(), &p).unwrap();
        fs::remove_file(dir.path().join("g.weights/arc0000_weight.csv")).unwrap();
        assert!(matches!(load_graph(&p), Err(GraphIoError::MissingWeights(_))));
    }
}
