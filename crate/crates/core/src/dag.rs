//! Network graphs: building, validation, levels and computable sub-graphs.
//!
//! Nodes are identified by strings. Every node with several incoming arcs
//! combines them either by concatenation (ordered by port) or by summation.
//! A node with several outgoing arcs copies its value to each of them.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::ops::{ArcOp, OpError};

pub type NodeId = String;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Combine {
    /// Stack incoming values in port order.
    #[default]
    Concat,
    /// Add incoming values; all must share one dimension.
    Sum,
}

impl Combine {
    pub fn as_str(self) -> &'static str {
        match self {
            Combine::Concat => "concat",
            Combine::Sum => "sum",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arc {
    pub from: NodeId,
    pub to: NodeId,
    pub port: usize,
    pub op: ArcOp,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DagError {
    #[error("arc {from} -> {to} would close a cycle")]
    CycleCreated { from: NodeId, to: NodeId },
    #[error("graph contains a cycle")]
    CycleDetected,
    #[error("dimension mismatch at {at}: expected {expected}, found {found}")]
    DimMismatch { at: String, expected: usize, found: usize },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {0} has no value yet (no incoming arcs)")]
    NoValue(NodeId),
    #[error("port {port} of node {node} already in use")]
    PortInUse { node: NodeId, port: usize },
    #[error("node {0} already feeds other arcs; its dimension is fixed")]
    NodeHasConsumers(NodeId),
    #[error("node {0} already exists")]
    DuplicateNode(NodeId),
    #[error("node {0} is not reachable from the input")]
    Unreachable(NodeId),
    #[error("invalid op: {0}")]
    Op(#[from] OpError),
    #[error("invalid graph: {0}")]
    Invalid(ValidationReport),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Cycle,
    InputHasIncoming(NodeId),
    MultipleInputs(Vec<NodeId>),
    MultipleOutputs(Vec<NodeId>),
    Unreachable(NodeId),
    UnknownEndpoint { arc: usize, node: NodeId },
    PortLayout { node: NodeId, ports: Vec<usize> },
    Dimension { arc: usize, message: String },
    SumMismatch { node: NodeId, dims: Vec<usize> },
    BadOp { arc: usize, error: OpError },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Cycle => write!(f, "cycle"),
            Violation::InputHasIncoming(n) => write!(f, "input node {n} has incoming arcs"),
            Violation::MultipleInputs(ns) => write!(f, "multiple inputs: {}", ns.join(", ")),
            Violation::MultipleOutputs(ns) => write!(f, "multiple outputs: {}", ns.join(", ")),
            Violation::Unreachable(n) => write!(f, "unreachable node {n}"),
            Violation::UnknownEndpoint { arc, node } => {
                write!(f, "arc {arc} references unknown node {node}")
            }
            Violation::PortLayout { node, ports } => {
                write!(f, "ports of node {node} are not 0..k: {ports:?}")
            }
            Violation::Dimension { arc, message } => write!(f, "arc {arc}: {message}"),
            Violation::SumMismatch { node, dims } => {
                write!(f, "sum node {node} has unequal input dims {dims:?}")
            }
            Violation::BadOp { arc, error } => write!(f, "arc {arc}: {error}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "ok");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// Kahn's algorithm with ties broken by smallest index.
fn kahn(n: usize, edges: &[(usize, usize)]) -> Option<Vec<usize>> {
    let mut indeg = vec![0usize; n];
    let mut out = vec![Vec::new(); n];
    for &(u, v) in edges {
        indeg[v] += 1;
        out[u].push(v);
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(u) = ready.pop_first() {
        order.push(u);
        for &v in &out[u] {
            indeg[v] -= 1;
            if indeg[v] == 0 {
                ready.insert(v);
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// Incremental graph builder. Arcs are checked as they are added.
#[derive(Debug, Clone)]
pub struct DagBuilder {
    input: NodeId,
    input_dim: usize,
    nodes: BTreeMap<NodeId, Combine>,
    arcs: Vec<Arc>,
    dims: HashMap<NodeId, usize>,
    out_adj: HashMap<NodeId, Vec<NodeId>>,
}

impl DagBuilder {
    pub fn new(input: &str, dim: usize) -> Self {
        let mut nodes = BTreeMap::new();
        nodes.insert(input.to_string(), Combine::Concat);
        let mut dims = HashMap::new();
        dims.insert(input.to_string(), dim);
        DagBuilder {
            input: input.to_string(),
            input_dim: dim,
            nodes,
            arcs: Vec::new(),
            dims,
            out_adj: HashMap::new(),
        }
    }

    pub fn input(&self) -> &str {
        &self.input
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    /// Output dimension of a node that already has a value.
    pub fn dim(&self, id: &str) -> Option<usize> {
        self.dims.get(id).copied()
    }

    pub fn add_node(&mut self, id: &str, combine: Combine) -> Result<(), DagError> {
        if self.nodes.contains_key(id) {
            return Err(DagError::DuplicateNode(id.to_string()));
        }
        self.nodes.insert(id.to_string(), combine);
        Ok(())
    }

    pub fn set_combine(&mut self, id: &str, combine: Combine) -> Result<(), DagError> {
        if self.arcs.iter().any(|a| a.to == id) {
            return Err(DagError::NodeHasConsumers(id.to_string()));
        }
        match self.nodes.get_mut(id) {
            Some(c) => {
                *c = combine;
                Ok(())
            }
            None => Err(DagError::UnknownNode(id.to_string())),
        }
    }

    fn next_port(&self, to: &str) -> usize {
        self.arcs.iter().filter(|a| a.to == to).map(|a| a.port + 1).max().unwrap_or(0)
    }

    /// Adds an arc on the next free port of `to`, creating `to` as a concat
    /// node if needed.
    pub fn add_arc(&mut self, from: &str, to: &str, op: ArcOp) -> Result<usize, DagError> {
        let port = self.next_port(to);
        self.add_arc_at(from, to, port, op)
    }

    fn reaches(&self, start: &str, target: &str) -> bool {
        let mut stack = vec![start];
        let mut seen = BTreeSet::new();
        while let Some(u) = stack.pop() {
            if u == target {
                return true;
            }
            if !seen.insert(u) {
                continue;
            }
            if let Some(next) = self.out_adj.get(u) {
                stack.extend(next.iter().map(|s| s.as_str()));
            }
        }
        false
    }

    pub fn add_arc_at(
        &mut self,
        from: &str,
        to: &str,
        port: usize,
        op: ArcOp,
    ) -> Result<usize, DagError> {
        if !self.nodes.contains_key(from) {
            return Err(DagError::UnknownNode(from.to_string()));
        }
        let from_dim = self.dims.get(from).copied().ok_or_else(|| DagError::NoValue(from.into()))?;
        if from == to || self.reaches(to, from) {
            return Err(DagError::CycleCreated { from: from.into(), to: to.into() });
        }
        op.check()?;
        let out = op.out_dim(from_dim).map_err(|e| match e {
            OpError::DimMismatch { expected, found } => DagError::DimMismatch {
                at: format!("arc {from} -> {to}"),
                expected,
                found,
            },
            other => DagError::Op(other),
        })?;
        if self.arcs.iter().any(|a| a.to == to && a.port == port) {
            return Err(DagError::PortInUse { node: to.into(), port });
        }
        let combine = *self.nodes.entry(to.to_string()).or_default();
        let has_consumers = self.out_adj.get(to).is_some_and(|v| !v.is_empty());
        let new_dim = match (combine, self.dims.get(to)) {
            (_, None) => out,
            (Combine::Sum, Some(&d)) if d != out => {
                return Err(DagError::DimMismatch {
                    at: format!("sum node {to}"),
                    expected: d,
                    found: out,
                })
            }
            (Combine::Sum, Some(&d)) => d,
            (Combine::Concat, Some(_)) if has_consumers => {
                return Err(DagError::NodeHasConsumers(to.into()))
            }
            (Combine::Concat, Some(&d)) => d + out,
        };
        self.dims.insert(to.to_string(), new_dim);
        self.out_adj.entry(from.to_string()).or_default().push(to.to_string());
        self.arcs.push(Arc { from: from.into(), to: to.into(), port, op });
        Ok(self.arcs.len() - 1)
    }

    /// Copies `net` into this builder, gluing its input node onto `at` and
    /// renaming every other node to `prefix` + id. Returns the new name of
    /// the embedded output node.
    pub fn embed(&mut self, net: &DagNet, at: &str, prefix: &str) -> Result<NodeId, DagError> {
        let rename = |id: &str| {
            if id == net.input() {
                at.to_string()
            } else {
                format!("{prefix}{id}")
            }
        };
        for id in net.node_ids() {
            if id != net.input() {
                self.add_node(&rename(id), net.combine(id).unwrap_or_default())?;
            }
        }
        for &ai in net.arc_order() {
            let a = &net.arcs()[ai];
            self.add_arc_at(&rename(&a.from), &rename(&a.to), a.port, a.op.clone())?;
        }
        Ok(rename(net.output()))
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn validate(&self) -> ValidationReport {
        let nodes: Vec<(NodeId, Combine)> =
            self.nodes.iter().map(|(k, v)| (k.clone(), *v)).collect();
        analyze(&self.input, self.input_dim, &nodes, &self.arcs).0
    }

    pub fn topological_order(&self) -> Result<Vec<NodeId>, DagError> {
        let ids: Vec<&NodeId> = self.nodes.keys().collect();
        let index: HashMap<&str, usize> =
            ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let edges: Vec<(usize, usize)> = self
            .arcs
            .iter()
            .map(|a| (index[a.from.as_str()], index[a.to.as_str()]))
            .collect();
        let order = kahn(ids.len(), &edges).ok_or(DagError::CycleDetected)?;
        Ok(order.into_iter().map(|i| ids[i].clone()).collect())
    }

    pub fn freeze(self) -> Result<DagNet, DagError> {
        let nodes: Vec<(NodeId, Combine)> = self.nodes.into_iter().collect();
        DagNet::from_parts(&self.input, self.input_dim, nodes, self.arcs)
    }
}

struct Analysis {
    ids: Vec<NodeId>,
    combine: Vec<Combine>,
    dims: Vec<usize>,
    arc_ends: Vec<(usize, usize)>,
    topo: Vec<usize>,
    output: usize,
}

/// Checks every structural invariant; on success also returns the indexed
/// form of the graph.
fn analyze(
    input: &str,
    input_dim: usize,
    nodes: &[(NodeId, Combine)],
    arcs: &[Arc],
) -> (ValidationReport, Option<Analysis>) {
    let mut report = ValidationReport::default();
    let mut sorted: Vec<(NodeId, Combine)> = nodes.to_vec();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    sorted.dedup_by(|a, b| a.0 == b.0);
    let ids: Vec<NodeId> = sorted.iter().map(|n| n.0.clone()).collect();
    let combine: Vec<Combine> = sorted.iter().map(|n| n.1).collect();
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let n = ids.len();

    let Some(&inp) = index.get(input) else {
        report.violations.push(Violation::UnknownEndpoint { arc: usize::MAX, node: input.into() });
        return (report, None);
    };
    let mut ends = Vec::with_capacity(arcs.len());
    for (i, a) in arcs.iter().enumerate() {
        match (index.get(a.from.as_str()), index.get(a.to.as_str())) {
            (Some(&u), Some(&v)) => ends.push((u, v)),
            (None, _) => report
                .violations
                .push(Violation::UnknownEndpoint { arc: i, node: a.from.clone() }),
            (_, None) => {
                report.violations.push(Violation::UnknownEndpoint { arc: i, node: a.to.clone() })
            }
        }
    }
    if !report.is_empty() {
        return (report, None);
    }
    for (i, a) in arcs.iter().enumerate() {
        if let Err(error) = a.op.check() {
            report.violations.push(Violation::BadOp { arc: i, error });
        }
    }

    let mut indeg = vec![0usize; n];
    let mut outdeg = vec![0usize; n];
    for &(u, v) in &ends {
        outdeg[u] += 1;
        indeg[v] += 1;
    }
    let topo = kahn(n, &ends);
    if topo.is_none() {
        report.violations.push(Violation::Cycle);
    }
    if indeg[inp] > 0 {
        report.violations.push(Violation::InputHasIncoming(input.into()));
    }
    let extra_sources: Vec<NodeId> =
        (0..n).filter(|&i| i != inp && indeg[i] == 0).map(|i| ids[i].clone()).collect();
    if !extra_sources.is_empty() {
        report.violations.push(Violation::MultipleInputs(extra_sources));
    }
    let sinks: Vec<usize> = (0..n).filter(|&i| outdeg[i] == 0).collect();
    if sinks.len() > 1 {
        report
            .violations
            .push(Violation::MultipleOutputs(sinks.iter().map(|&i| ids[i].clone()).collect()));
    }
    let mut reach = vec![false; n];
    let mut out_adj = vec![Vec::new(); n];
    for &(u, v) in &ends {
        out_adj[u].push(v);
    }
    let mut queue = VecDeque::from([inp]);
    reach[inp] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &out_adj[u] {
            if !reach[v] {
                reach[v] = true;
                queue.push_back(v);
            }
        }
    }
    for i in 0..n {
        if !reach[i] {
            report.violations.push(Violation::Unreachable(ids[i].clone()));
        }
    }

    let mut in_arcs: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, &(_, v)) in ends.iter().enumerate() {
        in_arcs[v].push(i);
    }
    for v in 0..n {
        in_arcs[v].sort_by_key(|&i| arcs[i].port);
        let ports: Vec<usize> = in_arcs[v].iter().map(|&i| arcs[i].port).collect();
        if ports.iter().enumerate().any(|(k, &p)| k != p) {
            report.violations.push(Violation::PortLayout { node: ids[v].clone(), ports });
        }
    }

    let Some(topo) = topo else {
        return (report, None);
    };
    let mut dims: Vec<Option<usize>> = vec![None; n];
    dims[inp] = Some(input_dim);
    for &v in &topo {
        if v == inp {
            continue;
        }
        let mut outs = Vec::new();
        for &ai in &in_arcs[v] {
            let Some(d) = dims[ends[ai].0] else { continue };
            match arcs[ai].op.out_dim(d) {
                Ok(o) => outs.push(o),
                Err(e) => {
                    report.violations.push(Violation::Dimension { arc: ai, message: e.to_string() })
                }
            }
        }
        if outs.len() != in_arcs[v].len() || outs.is_empty() {
            continue;
        }
        dims[v] = match combine[v] {
            Combine::Concat => Some(outs.iter().sum()),
            Combine::Sum => {
                if outs.iter().any(|&o| o != outs[0]) {
                    report.violations.push(Violation::SumMismatch { node: ids[v].clone(), dims: outs });
                    None
                } else {
                    Some(outs[0])
                }
            }
        };
    }
    if !report.is_empty() || sinks.len() != 1 {
        return (report, None);
    }
    let analysis = Analysis {
        ids,
        combine,
        dims: dims.into_iter().map(|d| d.unwrap_or(0)).collect(),
        arc_ends: ends,
        topo,
        output: sinks[0],
    };
    (report, Some(analysis))
}

/// Longest-path levels of a frozen net.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelMap {
    pub level: BTreeMap<NodeId, usize>,
    pub depth: usize,
    /// Nodes at each level, sorted by id.
    pub levels: Vec<Vec<NodeId>>,
}

impl LevelMap {
    pub fn nodes_at(&self, n: usize) -> &[NodeId] {
        self.levels.get(n).map_or(&[], |v| v.as_slice())
    }

    pub fn counts(&self) -> Vec<usize> {
        self.levels.iter().map(|v| v.len()).collect()
    }
}

/// A validated, immutable network graph with cached analyses.
#[derive(Debug, Clone)]
pub struct DagNet {
    ids: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
    combine: Vec<Combine>,
    dims: Vec<usize>,
    arcs: Vec<Arc>,
    arc_ends: Vec<(usize, usize)>,
    in_arcs: Vec<Vec<usize>>,
    out_arcs: Vec<Vec<usize>>,
    topo: Vec<usize>,
    topo_pos: Vec<usize>,
    arc_order: Vec<usize>,
    input: usize,
    output: usize,
    level: Vec<usize>,
    levels: Vec<Vec<usize>>,
    ancestors: Vec<Vec<bool>>,
}

impl PartialEq for DagNet {
    fn eq(&self, other: &Self) -> bool {
        self.ids == other.ids
            && self.combine == other.combine
            && self.arcs == other.arcs
            && self.input == other.input
            && self.dims[self.input] == other.dims[other.input]
    }
}

impl DagNet {
    pub fn from_parts(
        input: &str,
        input_dim: usize,
        nodes: Vec<(NodeId, Combine)>,
        arcs: Vec<Arc>,
    ) -> Result<DagNet, DagError> {
        let (report, analysis) = analyze(input, input_dim, &nodes, &arcs);
        let Some(an) = analysis else {
            return Err(DagError::Invalid(report));
        };
        let n = an.ids.len();
        let index: HashMap<NodeId, usize> =
            an.ids.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        let mut in_arcs = vec![Vec::new(); n];
        let mut out_arcs = vec![Vec::new(); n];
        for (i, &(u, v)) in an.arc_ends.iter().enumerate() {
            in_arcs[v].push(i);
            out_arcs[u].push(i);
        }
        for v in in_arcs.iter_mut() {
            v.sort_by_key(|&i| arcs[i].port);
        }
        let mut topo_pos = vec![0; n];
        for (p, &v) in an.topo.iter().enumerate() {
            topo_pos[v] = p;
        }
        let mut arc_order: Vec<usize> = (0..arcs.len()).collect();
        arc_order.sort_by_key(|&i| (topo_pos[an.arc_ends[i].1], arcs[i].port, i));

        let inp = index[input];
        let mut level = vec![0usize; n];
        for &v in &an.topo {
            for &ai in &in_arcs[v] {
                level[v] = level[v].max(level[an.arc_ends[ai].0] + 1);
            }
        }
        let depth = level[an.output];
        let mut levels = vec![Vec::new(); depth + 1];
        for v in 0..n {
            levels[level[v]].push(v);
        }
        let mut ancestors = vec![vec![false; n]; n];
        for &v in &an.topo {
            let mut row = vec![false; n];
            row[v] = true;
            for &ai in &in_arcs[v] {
                let u = an.arc_ends[ai].0;
                for (r, &a) in row.iter_mut().zip(&ancestors[u]) {
                    *r |= a;
                }
            }
            ancestors[v] = row;
        }
        Ok(DagNet {
            ids: an.ids,
            index,
            combine: an.combine,
            dims: an.dims,
            arcs,
            arc_ends: an.arc_ends,
            in_arcs,
            out_arcs,
            topo: an.topo,
            topo_pos,
            arc_order,
            input: inp,
            output: an.output,
            level,
            levels,
            ancestors,
        })
    }

    pub fn input(&self) -> &str {
        &self.ids[self.input]
    }

    pub fn output(&self) -> &str {
        &self.ids[self.output]
    }

    pub fn input_dim(&self) -> usize {
        self.dims[self.input]
    }

    pub fn output_dim(&self) -> usize {
        self.dims[self.output]
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    /// Node ids in sorted order; position equals the internal index.
    pub fn node_ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn combine(&self, id: &str) -> Option<Combine> {
        self.node_index(id).map(|i| self.combine[i])
    }

    pub fn combine_at(&self, i: usize) -> Combine {
        self.combine[i]
    }

    pub fn dim(&self, id: &str) -> Option<usize> {
        self.node_index(id).map(|i| self.dims[i])
    }

    pub fn dim_at(&self, i: usize) -> usize {
        self.dims[i]
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    /// (from, to) node indices of arc `i`.
    pub fn arc_ends(&self, i: usize) -> (usize, usize) {
        self.arc_ends[i]
    }

    /// Incoming arcs of node `i`, in port order.
    pub fn in_arcs(&self, i: usize) -> &[usize] {
        &self.in_arcs[i]
    }

    pub fn out_arcs(&self, i: usize) -> &[usize] {
        &self.out_arcs[i]
    }

    /// Node indices in deterministic topological order.
    pub fn topo(&self) -> &[usize] {
        &self.topo
    }

    pub fn topological_order(&self) -> Vec<NodeId> {
        self.topo.iter().map(|&i| self.ids[i].clone()).collect()
    }

    pub fn topo_position(&self, i: usize) -> usize {
        self.topo_pos[i]
    }

    /// All arcs ordered by the topological position of their head, then port.
    pub fn arc_order(&self) -> &[usize] {
        &self.arc_order
    }

    pub fn level_of(&self, id: &str) -> Option<usize> {
        self.node_index(id).map(|i| self.level[i])
    }

    pub fn level_at(&self, i: usize) -> usize {
        self.level[i]
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    /// Node indices at level `n`, ascending (hence sorted by id).
    pub fn level_nodes(&self, n: usize) -> &[usize] {
        self.levels.get(n).map_or(&[], |v| v.as_slice())
    }

    pub fn l_values(&self) -> LevelMap {
        LevelMap {
            level: self.ids.iter().cloned().zip(self.level.iter().copied()).collect(),
            depth: self.depth(),
            levels: self
                .levels
                .iter()
                .map(|l| l.iter().map(|&i| self.ids[i].clone()).collect())
                .collect(),
        }
    }

    /// Whether `b` lies on some input-to-`a` path (`a` included).
    pub fn is_ancestor(&self, b: usize, a: usize) -> bool {
        self.ancestors[a][b]
    }

    /// Arc indices of the computable sub-graph of node `a`, in arc order.
    pub fn subgraph_arcs(&self, a: usize) -> Vec<usize> {
        self.arc_order
            .iter()
            .copied()
            .filter(|&i| self.ancestors[a][self.arc_ends[i].1])
            .collect()
    }

    pub fn computable_subgraph(&self, a: &str) -> Result<DagNet, DagError> {
        let ai = self.node_index(a).ok_or_else(|| DagError::UnknownNode(a.into()))?;
        if !self.ancestors[ai][self.input] {
            return Err(DagError::Unreachable(a.into()));
        }
        let nodes = (0..self.ids.len())
            .filter(|&i| self.ancestors[ai][i])
            .map(|i| (self.ids[i].clone(), self.combine[i]))
            .collect();
        let arcs = self.subgraph_arcs(ai).into_iter().map(|i| self.arcs[i].clone()).collect();
        DagNet::from_parts(self.input(), self.input_dim(), nodes, arcs)
    }

    /// Node list and arcs, enough to rebuild the net.
    pub fn to_parts(&self) -> (Vec<(NodeId, Combine)>, Vec<Arc>) {
        let nodes = self.ids.iter().cloned().zip(self.combine.iter().copied()).collect();
        (nodes, self.arcs.clone())
    }

    /// Rebuilds the net with each arc op passed through `f`.
    pub fn map_ops<F>(&self, mut f: F) -> Result<DagNet, DagError>
    where
        F: FnMut(usize, &ArcOp) -> ArcOp,
    {
        let (nodes, mut arcs) = self.to_parts();
        for (i, a) in arcs.iter_mut().enumerate() {
            a.op = f(i, &a.op);
        }
        DagNet::from_parts(self.input(), self.input_dim(), nodes, arcs)
    }
}
