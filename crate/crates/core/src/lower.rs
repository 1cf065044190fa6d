//! Lowering of CPWL activations and max-pooling to ReLU-only fragments.

use ndarray::{array, Array1, Array2};

use crate::dag::{DagBuilder, DagError, DagNet};
use crate::ops::{ArcOp, CpwlSpec};

/// Scalar fragment `x -> y` computing `spec` as one ReLU layer followed by
/// a linear read-out.
pub fn lower_cpwl_to_relu(spec: &CpwlSpec) -> Result<DagNet, DagError> {
    let mut b = DagBuilder::new("x", 1);
    let terms = spec.num_terms();
    if terms == 0 {
        b.add_arc("x", "y", ArcOp::linear(array![[0.0]]))?;
        return b.freeze();
    }
    let mut w = Array2::zeros((terms, 1));
    let mut bias = Array1::zeros(terms);
    let mut out = Array2::zeros((1, terms));
    for (i, &(r, a)) in spec.right_terms().iter().enumerate() {
        w[[i, 0]] = 1.0;
        bias[i] = -a;
        out[[0, i]] = r;
    }
    let offset = spec.right_terms().len();
    for (j, &(l, t)) in spec.left_terms().iter().enumerate() {
        w[[offset + j, 0]] = -1.0;
        bias[offset + j] = t;
        out[[0, offset + j]] = l;
    }
    b.add_arc("x", "h", ArcOp::relu_affine(w, bias))?;
    b.add_arc("h", "y", ArcOp::linear(out))?;
    b.freeze()
}

/// max(u, v) = ((u + v) + relu(u - v) + relu(v - u)) / 2 applied to the
/// 2-vector at `from`, writing the scalar result to `to`.
fn max2_into(b: &mut DagBuilder, from: &str, hub: &str, to: &str) -> Result<(), DagError> {
    b.add_arc(from, hub, ArcOp::linear(array![[1.0, 1.0]]))?;
    b.add_arc(from, hub, ArcOp::relu_affine(array![[1.0, -1.0]], array![0.0]))?;
    b.add_arc(from, hub, ArcOp::relu_affine(array![[-1.0, 1.0]], array![0.0]))?;
    b.add_arc(hub, to, ArcOp::linear(array![[0.5, 0.5, 0.5]]))?;
    Ok(())
}

pub fn lower_maxpool2() -> Result<DagNet, DagError> {
    let mut b = DagBuilder::new("x", 2);
    max2_into(&mut b, "x", "h", "y")?;
    b.freeze()
}

fn selector(dim: usize, coords: &[usize]) -> Array2<f64> {
    let mut s = Array2::zeros((coords.len(), dim));
    for (r, &c) in coords.iter().enumerate() {
        s[[r, c]] = 1.0;
    }
    s
}

/// Fragment `x -> y` computing the maximum of a `k`-vector by a balanced
/// tree of pairwise maxima; an odd element is carried to the next round.
pub fn lower_maxpool_n(k: usize) -> Result<DagNet, DagError> {
    assert!(k >= 2, "block size must be at least 2");
    let mut b = DagBuilder::new("x", k);
    if k == 2 {
        max2_into(&mut b, "x", "h", "y")?;
        return b.freeze();
    }
    // Each element is a (node, coordinate) reference.
    let mut elems: Vec<(String, usize)> = (0..k).map(|i| ("x".to_string(), i)).collect();
    let mut round = 0;
    while elems.len() > 1 {
        let last_round = elems.len() == 2;
        let mut next = Vec::new();
        for (j, pair) in elems.chunks(2).enumerate() {
            if pair.len() == 1 {
                next.push(pair[0].clone());
                continue;
            }
            let p = format!("p{round}_{j}");
            let (n1, c1) = &pair[0];
            let (n2, c2) = &pair[1];
            if n1 == n2 {
                let dim = b.dim(n1).expect("value");
                b.add_arc(n1, &p, ArcOp::linear(selector(dim, &[*c1, *c2])))?;
            } else {
                let d1 = b.dim(n1).expect("value");
                let d2 = b.dim(n2).expect("value");
                b.add_arc(n1, &p, ArcOp::linear(selector(d1, &[*c1])))?;
                b.add_arc(n2, &p, ArcOp::linear(selector(d2, &[*c2])))?;
            }
            let m = if last_round { "y".to_string() } else { format!("m{round}_{j}") };
            max2_into(&mut b, &p, &format!("h{round}_{j}"), &m)?;
            next.push((m, 0));
        }
        elems = next;
        round += 1;
    }
    b.freeze()
}
