//! Evaluation under un-rectifying semantics: node values, activation
//! patterns, region signatures and region-wise affine maps.

use fnv::FnvHasher;
use ndarray::{concatenate, Array1, Array2, ArrayView1, Axis};
use std::hash::Hasher;
use thiserror::Error;

use crate::dag::{Combine, DagNet, NodeId};
use crate::ops::{OpError, Pattern};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("input dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("non-finite value at node {0}")]
    NonFiniteValue(NodeId),
    #[error("transform arc {arc} lies in the computable sub-graph of {node}")]
    TransformInSubgraph { node: NodeId, arc: usize },
    #[error("transform arc {0} present; no region-wise affine map")]
    TransformPresent(usize),
    #[error("level {level} out of range 0..={depth}")]
    LevelOutOfRange { level: usize, depth: usize },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("op failed at arc {arc}: {error}")]
    Op { arc: usize, error: OpError },
}

/// Values of every evaluated node and the pattern of every evaluated
/// activation arc.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub values: Vec<Option<Array1<f64>>>,
    pub patterns: Vec<Option<Pattern>>,
    output: usize,
}

impl Trace {
    pub fn value(&self, net: &DagNet, id: &str) -> Option<&Array1<f64>> {
        net.node_index(id).and_then(|i| self.values[i].as_ref())
    }

    pub fn output(&self) -> &Array1<f64> {
        self.values[self.output].as_ref().expect("output evaluated")
    }
}

fn combine(kind: Combine, parts: &[Array1<f64>]) -> Array1<f64> {
    match kind {
        Combine::Concat if parts.len() == 1 => parts[0].clone(),
        Combine::Concat => {
            let views: Vec<ArrayView1<f64>> = parts.iter().map(|p| p.view()).collect();
            concatenate(Axis(0), &views).expect("1-d concat")
        }
        Combine::Sum => {
            let mut acc = parts[0].clone();
            for p in &parts[1..] {
                acc += p;
            }
            acc
        }
    }
}

/// Evaluates the ancestors of node `upto` (the whole net for the output).
pub fn forward_to(net: &DagNet, upto: usize, x: &Array1<f64>) -> Result<Trace, EvalError> {
    if x.len() != net.input_dim() {
        return Err(EvalError::DimMismatch { expected: net.input_dim(), found: x.len() });
    }
    let n = net.node_count();
    let mut values: Vec<Option<Array1<f64>>> = vec![None; n];
    let mut patterns: Vec<Option<Pattern>> = vec![None; net.arcs().len()];
    let input = net.node_index(net.input()).expect("input");
    for &v in net.topo() {
        if !net.is_ancestor(v, upto) {
            continue;
        }
        let value = if v == input {
            x.clone()
        } else {
            let mut parts = Vec::with_capacity(net.in_arcs(v).len());
            for &ai in net.in_arcs(v) {
                let (u, _) = net.arc_ends(ai);
                let src = values[u].as_ref().expect("ancestor evaluated");
                let (out, pattern) = net.arcs()[ai]
                    .op
                    .apply(src)
                    .map_err(|error| EvalError::Op { arc: ai, error })?;
                patterns[ai] = pattern;
                parts.push(out);
            }
            combine(net.combine_at(v), &parts)
        };
        if !value.iter().all(|t| t.is_finite()) {
            return Err(EvalError::NonFiniteValue(net.node_ids()[v].clone()));
        }
        values[v] = Some(value);
    }
    Ok(Trace { values, patterns, output: upto })
}

pub fn forward(net: &DagNet, x: &Array1<f64>) -> Result<Trace, EvalError> {
    let out = net.node_index(net.output()).expect("output");
    forward_to(net, out, x)
}

/// Network output only.
pub fn eval(net: &DagNet, x: &Array1<f64>) -> Result<Array1<f64>, EvalError> {
    let out = net.node_index(net.output()).expect("output");
    let mut trace = forward_to(net, out, x)?;
    Ok(trace.values[out].take().expect("output evaluated"))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SignatureEntry {
    /// Head node of the activation arc.
    pub node: NodeId,
    pub arc: usize,
    pub pattern: Pattern,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RegionSignature {
    pub entries: Vec<SignatureEntry>,
}

impl RegionSignature {
    pub fn hash64(&self) -> u64 {
        let mut h = FnvHasher::default();
        for e in &self.entries {
            h.write_u64(e.arc as u64);
            for &p in &e.pattern {
                h.write_u64(p);
            }
        }
        h.finish()
    }

    pub fn hex(&self) -> String {
        format!("{:016x}", self.hash64())
    }

    /// Entries whose arc lies in `arcs`.
    pub fn project(&self, arcs: &[usize]) -> RegionSignature {
        RegionSignature {
            entries: self.entries.iter().filter(|e| arcs.contains(&e.arc)).cloned().collect(),
        }
    }
}

/// Activation arcs of the computable sub-graph of `a`, in signature order.
/// Errors if the sub-graph holds a transform arc.
pub fn signature_arcs(net: &DagNet, a: usize) -> Result<Vec<usize>, EvalError> {
    let arcs = net.subgraph_arcs(a);
    if let Some(&t) = arcs.iter().find(|&&i| net.arcs()[i].op.is_transform()) {
        return Err(EvalError::TransformInSubgraph { node: net.node_ids()[a].clone(), arc: t });
    }
    Ok(arcs.into_iter().filter(|&i| net.arcs()[i].op.is_activation()).collect())
}

pub fn signature(net: &DagNet, a: &str, x: &Array1<f64>) -> Result<RegionSignature, EvalError> {
    let ai = net.node_index(a).ok_or_else(|| EvalError::UnknownNode(a.into()))?;
    let arcs = signature_arcs(net, ai)?;
    let trace = forward_to(net, ai, x)?;
    let entries = arcs
        .into_iter()
        .map(|i| SignatureEntry {
            node: net.arcs()[i].to.clone(),
            arc: i,
            pattern: trace.patterns[i].clone().expect("activation arc evaluated"),
        })
        .collect();
    Ok(RegionSignature { entries })
}

/// Stacked outputs of the level-`n` nodes, ordered by node id.
pub fn level_output(net: &DagNet, n: usize, x: &Array1<f64>) -> Result<Array1<f64>, EvalError> {
    if n > net.depth() {
        return Err(EvalError::LevelOutOfRange { level: n, depth: net.depth() });
    }
    let trace = forward(net, x)?;
    Ok(stack_level(net, &trace, n))
}

pub fn stack_level(net: &DagNet, trace: &Trace, n: usize) -> Array1<f64> {
    let parts: Vec<Array1<f64>> = net
        .level_nodes(n)
        .iter()
        .map(|&i| trace.values[i].clone().expect("node evaluated"))
        .collect();
    combine(Combine::Concat, &parts)
}

/// The affine map `y -> A y + b` the net equals on the region of `x`,
/// obtained by freezing every activation pattern at `x`.
pub fn region_affine(net: &DagNet, x: &Array1<f64>) -> Result<(Array2<f64>, Array1<f64>), EvalError> {
    if let Some(t) = net.arcs().iter().position(|a| a.op.is_transform()) {
        return Err(EvalError::TransformPresent(t));
    }
    let trace = forward(net, x)?;
    let n = net.node_count();
    let dim = net.input_dim();
    let input = net.node_index(net.input()).expect("input");
    let mut maps: Vec<Option<(Array2<f64>, Array1<f64>)>> = vec![None; n];
    for &v in net.topo() {
        if v == input {
            maps[v] = Some((Array2::eye(dim), Array1::zeros(dim)));
            continue;
        }
        let mut parts = Vec::new();
        for &ai in net.in_arcs(v) {
            let (u, _) = net.arc_ends(ai);
            let (a, c) = maps[u].as_ref().expect("ancestor mapped");
            let op = &net.arcs()[ai].op;
            let (mut a, mut c) = match op.weight() {
                Some(w) => (w.dot(a), w.dot(c)),
                None => (a.clone(), c.clone()),
            };
            if let Some(b) = op.bias() {
                c += b;
            }
            if let Some(act) = op.activation() {
                let pattern = trace.patterns[ai].as_ref().expect("pattern");
                let (j, o) = act
                    .frozen_affine(pattern)
                    .map_err(|error| EvalError::Op { arc: ai, error })?;
                a = j.dot(&a);
                c = j.dot(&c) + o;
            }
            parts.push((a, c));
        }
        maps[v] = Some(match net.combine_at(v) {
            Combine::Concat => {
                let av: Vec<_> = parts.iter().map(|p| p.0.view()).collect();
                let cv: Vec<_> = parts.iter().map(|p| p.1.view()).collect();
                (concatenate(Axis(0), &av).expect("rows"), concatenate(Axis(0), &cv).expect("rows"))
            }
            Combine::Sum => {
                let (mut a, mut c) = parts[0].clone();
                for p in &parts[1..] {
                    a += &p.0;
                    c += &p.1;
                }
                (a, c)
            }
        });
    }
    let out = net.node_index(net.output()).expect("output");
    Ok(maps[out].take().expect("output mapped"))
}
