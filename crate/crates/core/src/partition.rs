//! Sampling-based partition censuses and refinement checks.

use fnv::FnvHashMap;
use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dag::{DagNet, NodeId};
use crate::forward::{forward, signature_arcs, EvalError};
use crate::ops::Pattern;

/// Groups larger than this are subsampled for the intra-region distance.
pub const MAX_GROUP_PAIRWISE: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PartitionError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("node {b} is not in the computable sub-graph of {a}")]
    NotInSubgraph { a: NodeId, b: NodeId },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionCensus {
    pub node: NodeId,
    pub samples: usize,
    pub region_count: usize,
    pub multi_point_count: usize,
    pub max_intra_dist: f64,
    /// Set when some group was subsampled for `max_intra_dist`.
    pub subsampled: bool,
}

/// Activation patterns of every arc for every sample (rows of `samples`).
pub struct PatternTable {
    rows: Vec<Vec<Option<Pattern>>>,
}

impl PatternTable {
    pub fn compute(net: &DagNet, samples: &Array2<f64>) -> Result<Self, EvalError> {
        let rows = (0..samples.nrows())
            .into_par_iter()
            .map(|i| forward(net, &samples.row(i).to_owned()).map(|t| t.patterns))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PatternTable { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Signature key of sample `i` restricted to `arcs`.
    pub fn key(&self, i: usize, arcs: &[usize]) -> Vec<u64> {
        let mut key = Vec::new();
        for &a in arcs {
            if let Some(p) = &self.rows[i][a] {
                key.extend_from_slice(p);
            }
        }
        key
    }

    /// Sample indices grouped by signature at `arcs`, in order of first
    /// appearance.
    pub fn groups(&self, arcs: &[usize]) -> Vec<Vec<usize>> {
        let keys: Vec<Vec<u64>> = (0..self.rows.len())
            .into_par_iter()
            .map(|i| self.key(i, arcs))
            .collect();
        let mut slot: FnvHashMap<&[u64], usize> = FnvHashMap::default();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for (i, k) in keys.iter().enumerate() {
            let g = *slot.entry(k.as_slice()).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[g].push(i);
        }
        groups
    }
}

fn dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn group_diameter(samples: &Array2<f64>, group: &[usize]) -> (f64, bool) {
    let (idx, sub): (Vec<usize>, bool) = if group.len() > MAX_GROUP_PAIRWISE {
        let stride = group.len() as f64 / MAX_GROUP_PAIRWISE as f64;
        ((0..MAX_GROUP_PAIRWISE).map(|k| group[(k as f64 * stride) as usize]).collect(), true)
    } else {
        (group.to_vec(), false)
    };
    let best = (0..idx.len())
        .into_par_iter()
        .map(|i| {
            let xi = samples.row(idx[i]);
            idx[i + 1..].iter().map(|&j| dist(xi, samples.row(j))).fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    (best, sub)
}

fn census_of_groups(node: &str, samples: &Array2<f64>, groups: &[Vec<usize>]) -> PartitionCensus {
    let mut max_intra_dist = 0.0f64;
    let mut subsampled = false;
    let mut multi = 0;
    for g in groups.iter().filter(|g| g.len() >= 2) {
        multi += g.len();
        let (d, s) = group_diameter(samples, g);
        max_intra_dist = max_intra_dist.max(d);
        subsampled |= s;
    }
    PartitionCensus {
        node: node.to_string(),
        samples: samples.nrows(),
        region_count: groups.len(),
        multi_point_count: multi,
        max_intra_dist,
        subsampled,
    }
}

fn index_of(net: &DagNet, id: &str) -> Result<usize, PartitionError> {
    net.node_index(id).ok_or_else(|| PartitionError::UnknownNode(id.into()))
}

/// Census at node `a` using a precomputed pattern table.
pub fn census_with_table(
    net: &DagNet,
    table: &PatternTable,
    a: &str,
    samples: &Array2<f64>,
) -> Result<PartitionCensus, PartitionError> {
    let arcs = signature_arcs(net, index_of(net, a)?)?;
    Ok(census_of_groups(a, samples, &table.groups(&arcs)))
}

pub fn partition_census(
    net: &DagNet,
    a: &str,
    samples: &Array2<f64>,
) -> Result<PartitionCensus, PartitionError> {
    signature_arcs(net, index_of(net, a)?)?;
    let table = PatternTable::compute(net, samples)?;
    census_with_table(net, &table, a, samples)
}

/// Number of sample pairs sharing a region at `a` but not at `b`.
pub fn refinement_check_with_table(
    net: &DagNet,
    table: &PatternTable,
    a: &str,
    b: &str,
) -> Result<u64, PartitionError> {
    let ai = index_of(net, a)?;
    let bi = index_of(net, b)?;
    if !net.is_ancestor(bi, ai) {
        return Err(PartitionError::NotInSubgraph { a: a.into(), b: b.into() });
    }
    let arcs_a = signature_arcs(net, ai)?;
    let arcs_b = signature_arcs(net, bi)?;
    let pairs = |n: usize| (n as u64) * (n as u64).saturating_sub(1) / 2;
    let mut violations = 0;
    for g in table.groups(&arcs_a) {
        let mut sub: FnvHashMap<Vec<u64>, usize> = FnvHashMap::default();
        for &i in &g {
            *sub.entry(table.key(i, &arcs_b)).or_default() += 1;
        }
        violations += pairs(g.len()) - sub.values().map(|&n| pairs(n)).sum::<u64>();
    }
    Ok(violations)
}

pub fn refinement_check(
    net: &DagNet,
    a: &str,
    b: &str,
    samples: &Array2<f64>,
) -> Result<u64, PartitionError> {
    let ai = index_of(net, a)?;
    let bi = index_of(net, b)?;
    if !net.is_ancestor(bi, ai) {
        return Err(PartitionError::NotInSubgraph { a: a.into(), b: b.into() });
    }
    let table = PatternTable::compute(net, samples)?;
    refinement_check_with_table(net, &table, a, b)
}

/// Product of per-channel region counts, saturating.
pub fn fusion_partition_bound(counts: &[u64]) -> u64 {
    counts.iter().fold(1u64, |acc, &n| acc.saturating_mul(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::DagBuilder;
    use crate::ops::ArcOp;
    use ndarray::{array, Array1};

    fn relu2() -> DagNet {
        let mut b = DagBuilder::new("I", 2);
        b.add_arc("I", "O", ArcOp::relu_affine(Array2::eye(2), Array1::zeros(2))).unwrap();
        b.freeze().unwrap()
    }

    #[test]
    fn single_sample() {
        let c = partition_census(&relu2(), "O", &array![[0.5, 0.5]]).unwrap();
        assert_eq!((c.region_count, c.multi_point_count, c.max_intra_dist), (1, 0, 0.0));
    }

    #[test]
    fn grid_quadrants() {
        let mut pts = Vec::new();
        for i in 0..21 {
            for j in 0..21 {
                pts.push(-2.0 + 0.2 * i as f64 + 0.01);
                pts.push(-2.0 + 0.2 * j as f64 + 0.01);
            }
        }
        let samples = Array2::from_shape_vec((441, 2), pts).unwrap();
        let c = partition_census(&relu2(), "O", &samples).unwrap();
        assert_eq!(c.region_count, 4);
        assert_eq!(c.multi_point_count, 441);
        assert!(!c.subsampled);
    }

    #[test]
    fn refinement_errors_and_self() {
        let net = relu2();
        let s = array![[1.0, 2.0], [-1.0, 0.5]];
        assert_eq!(refinement_check(&net, "O", "O", &s).unwrap(), 0);
        assert_eq!(refinement_check(&net, "O", "I", &s).unwrap(), 0);
        assert!(matches!(
            refinement_check(&net, "I", "O", &s),
            Err(PartitionError::NotInSubgraph { .. })
        ));
    }

    #[test]
    fn bounds() {
        assert_eq!(fusion_partition_bound(&[4, 4]), 16);
        assert_eq!(fusion_partition_bound(&[1, 9]), 9);
        assert_eq!(fusion_partition_bound(&[2, 3, 5]), 30);
        assert_eq!(fusion_partition_bound(&[u64::MAX, 2]), u64::MAX);
    }
}
