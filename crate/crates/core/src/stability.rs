//! Lipschitz analysis: matrix norms, per-level weight sums, the level-wise
//! upper bound on the Lipschitz constant, stability certificates, rescaling
//! and measured gains.

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::Serialize;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::dag::{DagError, DagNet};
use crate::forward::{forward, stack_level, EvalError};
use crate::rng::Normal;

pub const DEFAULT_TOL: f64 = 1e-9;
const MAX_ITERS: usize = 10_000;
// Seed of the power-iteration start vector.
const START_SEED: u64 = 0x5eed_cafe;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StabilityError {
    #[error("non-finite matrix entry")]
    NonFinite,
    #[error("level {level} out of range 1..={depth}")]
    LevelOutOfRange { level: usize, depth: usize },
    #[error("level {level} cannot be scaled: fixed arcs alone contribute {fixed}")]
    Unscalable { level: usize, fixed: f64 },
    #[error("pair {0} has identical points")]
    DegeneratePair(usize),
    #[error("shape error: {0}")]
    ShapeError(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Dag(#[from] DagError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    Spectral,
    Frobenius,
}

impl NormKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NormKind::Spectral => "spectral",
            NormKind::Frobenius => "frobenius",
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "spectral" => Ok(NormKind::Spectral),
            "frobenius" => Ok(NormKind::Frobenius),
            other => Err(format!("unknown norm {other}")),
        }
    }
}

/// Largest singular value by power iteration on `W^T W`.
///
/// Stops once the eigen-residual `|W^T W v - lambda v|` falls below
/// `tol * lambda`, or after 10^4 iterations.
pub fn spectral_norm(w: &Array2<f64>, tol: f64) -> Result<f64, StabilityError> {
    if !w.iter().all(|x| x.is_finite()) {
        return Err(StabilityError::NonFinite);
    }
    if w.iter().all(|&x| x == 0.0) {
        return Ok(0.0);
    }
    let mut v = Normal::new(START_SEED).vector(w.ncols());
    v /= v.dot(&v).sqrt();
    let mut lambda = 0.0;
    for _ in 0..MAX_ITERS {
        let mv = w.t().dot(&w.dot(&v));
        lambda = v.dot(&mv);
        let norm = mv.dot(&mv).sqrt();
        if norm == 0.0 {
            // Start vector in the null space; restart along a column.
            v = w.row(0).to_owned();
            v /= v.dot(&v).sqrt();
            continue;
        }
        let resid = (&mv - &(lambda * &v)).dot(&(&mv - &(lambda * &v))).sqrt();
        v = mv / norm;
        if resid <= tol * lambda.abs() {
            lambda = lambda.max(v.dot(&w.t().dot(&w.dot(&v))));
            break;
        }
    }
    Ok(lambda.max(0.0).sqrt())
}

pub fn frobenius_norm(w: &Array2<f64>) -> Result<f64, StabilityError> {
    if !w.iter().all(|x| x.is_finite()) {
        return Err(StabilityError::NonFinite);
    }
    Ok(w.iter().map(|x| x * x).sum::<f64>().sqrt())
}

pub fn matrix_norm(w: &Array2<f64>, kind: NormKind) -> Result<f64, StabilityError> {
    match kind {
        NormKind::Spectral => spectral_norm(w, DEFAULT_TOL),
        NormKind::Frobenius => frobenius_norm(w),
    }
}

/// Common bound `d` over all arcs; activation-free arcs count as 1.
pub fn net_uniform_bound(net: &DagNet) -> f64 {
    net.arcs().iter().map(|a| a.op.uniform_bound()).fold(1.0, f64::max)
}

/// Norm of each arc's linear part; arcs without one count as 1.
pub fn arc_norms(net: &DagNet, kind: NormKind) -> Result<Vec<f64>, StabilityError> {
    net.arcs()
        .par_iter()
        .map(|a| a.op.weight().map_or(Ok(1.0), |w| matrix_norm(w, kind)))
        .collect()
}

fn scaled(d: f64, raw: f64) -> f64 {
    if d.is_infinite() {
        f64::INFINITY
    } else {
        d * raw
    }
}

/// Raw norm total of the arcs entering level `n`.
fn level_raw(net: &DagNet, norms: &[f64], n: usize) -> f64 {
    net.level_nodes(n).iter().flat_map(|&a| net.in_arcs(a)).map(|&i| norms[i]).sum()
}

/// `s_n` for `n = 1..=L`.
pub fn level_sums(net: &DagNet, kind: NormKind) -> Result<Vec<f64>, StabilityError> {
    let norms = arc_norms(net, kind)?;
    let d = net_uniform_bound(net);
    Ok((1..=net.depth()).map(|n| scaled(d, level_raw(net, &norms, n))).collect())
}

pub fn level_weight_sum(net: &DagNet, n: usize, kind: NormKind) -> Result<f64, StabilityError> {
    if n == 0 || n > net.depth() {
        return Err(StabilityError::LevelOutOfRange { level: n, depth: net.depth() });
    }
    let norms = arc_norms(net, kind)?;
    Ok(scaled(net_uniform_bound(net), level_raw(net, &norms, n)))
}

/// `C(0..=L)` of the region-independent recursion.
pub fn lipschitz_level_bounds(net: &DagNet, kind: NormKind) -> Result<Vec<f64>, StabilityError> {
    let norms = arc_norms(net, kind)?;
    let d = net_uniform_bound(net);
    let mut c = vec![1.0; net.depth() + 1];
    for n in 1..=net.depth() {
        let mut total = 0.0;
        for &a in net.level_nodes(n) {
            for &i in net.in_arcs(a) {
                let (b, _) = net.arc_ends(i);
                total += norms[i] * c[net.level_at(b)];
            }
        }
        c[n] = scaled(d, total);
    }
    Ok(c)
}

pub fn lipschitz_upper_bound(net: &DagNet, kind: NormKind) -> Result<f64, StabilityError> {
    Ok(*lipschitz_level_bounds(net, kind)?.last().expect("level 0"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub d: f64,
    pub norm: NormKind,
    /// `s_n` for levels 1..=L.
    pub sums: Vec<f64>,
    pub m: Option<usize>,
    pub certified: bool,
    pub lipschitz_bound: f64,
    pub level_bounds: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub empirical_gain: Option<f64>,
}

/// Smallest `m` with `s_n <= 1` for all `n >= m` (levels are 1-based).
pub fn first_stable_level(sums: &[f64]) -> Option<usize> {
    let tail = sums.iter().rev().take_while(|&&s| s <= 1.0).count();
    (tail > 0).then(|| sums.len() - tail + 1)
}

pub fn stability_certificate(net: &DagNet, kind: NormKind) -> Result<StabilityReport, StabilityError> {
    let sums = level_sums(net, kind)?;
    let level_bounds = lipschitz_level_bounds(net, kind)?;
    let m = first_stable_level(&sums);
    Ok(StabilityReport {
        d: net_uniform_bound(net),
        norm: kind,
        certified: m.is_some(),
        m,
        lipschitz_bound: *level_bounds.last().expect("level 0"),
        level_bounds,
        sums,
        empirical_gain: None,
    })
}

/// Rescales the linear parts entering every level with `s_n > 1` so that
/// `s_n <= 1` afterwards. Arcs without a linear part keep contributing 1;
/// a level they alone saturate is unscalable.
pub fn scale_to_stability(net: &DagNet, kind: NormKind) -> Result<DagNet, StabilityError> {
    let d = net_uniform_bound(net);
    let mut norms = arc_norms(net, kind)?;
    let mut factor = vec![1.0; net.arcs().len()];
    for n in 1..=net.depth() {
        let arcs: Vec<usize> =
            net.level_nodes(n).iter().flat_map(|&a| net.in_arcs(a)).copied().collect();
        let s = scaled(d, arcs.iter().map(|&i| norms[i]).sum());
        if s <= 1.0 {
            continue;
        }
        let (scalable, fixed): (Vec<usize>, Vec<usize>) =
            arcs.iter().partition(|&&i| net.arcs()[i].op.weight().is_some());
        let fixed_sum = fixed.len() as f64;
        let scal_sum: f64 = scalable.iter().map(|&i| norms[i]).sum();
        if d * fixed_sum >= 1.0 || !d.is_finite() || scal_sum == 0.0 {
            return Err(StabilityError::Unscalable { level: n, fixed: d * fixed_sum });
        }
        let mut c = (1.0 / d - fixed_sum) / scal_sum;
        // Recompute from the scaled matrices; shrink until rounding agrees.
        for _ in 0..64 {
            let mut total = fixed_sum;
            for &i in &scalable {
                let w = net.arcs()[i].op.weight().expect("scalable") * c;
                norms[i] = matrix_norm(&w, kind)?;
                total += norms[i];
            }
            if d * total <= 1.0 {
                break;
            }
            c *= (1.0 - 4.0 * f64::EPSILON) / (d * total).max(1.0);
        }
        for &i in &scalable {
            factor[i] = c;
        }
    }
    Ok(net.map_ops(|i, op| {
        let mut op = op.clone();
        if factor[i] != 1.0 {
            if let Some(w) = op.weight_mut() {
                *w *= factor[i];
            }
        }
        op
    })?)
}

fn gain(fx: &Array1<f64>, fy: &Array1<f64>, dx: f64) -> f64 {
    let d = fx - fy;
    d.dot(&d).sqrt() / dx
}

fn pair_dist(x: &Array1<f64>, y: &Array1<f64>) -> f64 {
    let d = x - y;
    d.dot(&d).sqrt()
}

/// Largest `|N(x) - N(y)| / |x - y|` over the given pairs.
pub fn empirical_max_gain(
    net: &DagNet,
    pairs: &[(Array1<f64>, Array1<f64>)],
) -> Result<f64, StabilityError> {
    pairs
        .par_iter()
        .enumerate()
        .map(|(k, (x, y))| {
            let dx = pair_dist(x, y);
            if dx == 0.0 {
                return Err(StabilityError::DegeneratePair(k));
            }
            let fx = forward(net, x)?;
            let fy = forward(net, y)?;
            Ok(gain(fx.output(), fy.output(), dx))
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// Per-level maximum gain of `N_n` for `n = 0..=L`, over index pairs into
/// the rows of `samples`. Each sample is evaluated once.
pub fn level_max_gains(
    net: &DagNet,
    samples: &Array2<f64>,
    pairs: &[(usize, usize)],
) -> Result<Vec<f64>, StabilityError> {
    let levels: Vec<Vec<Array1<f64>>> = (0..samples.nrows())
        .into_par_iter()
        .map(|i| {
            let t = forward(net, &samples.row(i).to_owned())?;
            Ok((0..=net.depth()).map(|n| stack_level(net, &t, n)).collect())
        })
        .collect::<Result<_, StabilityError>>()?;
    max_gains_over(samples, pairs, net.depth() + 1, |i, n| &levels[i][n])
}

/// Maximum gain at each of the given nodes.
pub fn node_max_gains(
    net: &DagNet,
    nodes: &[&str],
    samples: &Array2<f64>,
    pairs: &[(usize, usize)],
) -> Result<Vec<f64>, StabilityError> {
    let idx: Vec<usize> = nodes
        .iter()
        .map(|id| {
            net.node_index(id).ok_or_else(|| StabilityError::Eval(EvalError::UnknownNode(id.to_string())))
        })
        .collect::<Result<_, _>>()?;
    let values: Vec<Vec<Array1<f64>>> = (0..samples.nrows())
        .into_par_iter()
        .map(|i| {
            let mut t = forward(net, &samples.row(i).to_owned())?;
            Ok(idx.iter().map(|&k| t.values[k].take().expect("evaluated")).collect())
        })
        .collect::<Result<_, StabilityError>>()?;
    max_gains_over(samples, pairs, idx.len(), |i, k| &values[i][k])
}

fn max_gains_over<'a, F>(
    samples: &Array2<f64>,
    pairs: &[(usize, usize)],
    width: usize,
    value: F,
) -> Result<Vec<f64>, StabilityError>
where
    F: Fn(usize, usize) -> &'a Array1<f64> + Sync,
{
    pairs
        .par_iter()
        .enumerate()
        .map(|(k, &(i, j))| {
            let dx = pair_dist(&samples.row(i).to_owned(), &samples.row(j).to_owned());
            if dx == 0.0 {
                return Err(StabilityError::DegeneratePair(k));
            }
            Ok((0..width).map(|n| gain(value(i, n), value(j, n), dx)).collect::<Vec<f64>>())
        })
        .try_reduce(
            || vec![0.0; width],
            |a, b| Ok(a.iter().zip(&b).map(|(x, y)| x.max(*y)).collect()),
        )
}

/// Whether `|I - W2 W1|_2 <= 1`, the condition under which the residual
/// block `x - W2 W1 x` is non-expansive.
pub fn resnet_stability_check(w1: &Array2<f64>, w2: &Array2<f64>) -> Result<bool, StabilityError> {
    if w2.ncols() != w1.nrows() || w2.nrows() != w1.ncols() {
        return Err(StabilityError::ShapeError(format!(
            "W2 is {}x{}, W1 is {}x{}",
            w2.nrows(),
            w2.ncols(),
            w1.nrows(),
            w1.ncols()
        )));
    }
    let p = w2.dot(w1);
    let r = Array2::eye(p.nrows()) - p;
    Ok(spectral_norm(&r, DEFAULT_TOL)? <= 1.0 + 1e-9)
}
