#![allow(dead_code)]

use ndarray::{Array1, Array2};
use unrectify::rng::Normal;
use unrectify::{ArcOp, Combine, CpwlSpec, DagBuilder, DagNet};

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[[i, j]] * m[[i, j]])
            .sum();
        let diag: f64 = (0..n).map(|i| m[[i, i]] * m[[i, i]]).sum();
        if off <= 1e-30 * diag.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * m[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[[k, p]], m[[k, q]]);
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[[p, k]], m[[q, k]]);
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[[i, i]]).collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Largest singular value via the eigenvalues of `W^T W`.
pub fn oracle_spectral_norm(w: &Array2<f64>) -> f64 {
    let g = w.t().dot(w);
    jacobi_eigenvalues(&g).last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Random orthogonal matrix by Gram-Schmidt on a Gaussian matrix.
pub fn random_orthogonal(n: usize, rng: &mut Normal) -> Array2<f64> {
    let g = rng.matrix(n, n);
    let mut q = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut v = g.column(j).to_owned();
        for k in 0..j {
            let qk = q.column(k).to_owned();
            v = &v - &(qk.dot(&v) * &qk);
        }
        let norm = v.dot(&v).sqrt();
        q.column_mut(j).assign(&(v / norm));
    }
    q
}

pub fn random_spec(rng: &mut Normal, max_terms: usize) -> CpwlSpec {
    let total = 1 + rng.below(max_terms as u64) as usize;
    let nr = rng.below(total as u64 + 1) as usize;
    let right = (0..nr).map(|_| (rng.sample(), rng.sample())).collect();
    let left = (nr..total).map(|_| (rng.sample(), rng.sample())).collect();
    CpwlSpec::new(right, left).unwrap()
}

/// Evaluates a CPWL function from its explicit pieces: locate the interval
/// between sorted breakpoints and apply that piece's slope and intercept.
pub fn interpolation_oracle(spec: &CpwlSpec, x: f64) -> f64 {
    let mut knots: Vec<f64> = spec
        .right_terms()
        .iter()
        .map(|t| t.1)
        .chain(spec.left_terms().iter().map(|t| t.1))
        .collect();
    knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // Slope and intercept of each piece from the term definitions.
    let piece = |probe: f64| -> (f64, f64) {
        let mut slope = 0.0;
        let mut icpt = 0.0;
        for &(r, a) in spec.right_terms() {
            if probe > a {
                slope += r;
                icpt -= r * a;
            }
        }
        for &(l, t) in spec.left_terms() {
            if probe < t {
                slope -= l;
                icpt += l * t;
            }
        }
        (slope, icpt)
    };
    let idx = knots.iter().filter(|&&k| k < x).count();
    let probe = match (idx, knots.len()) {
        (_, 0) => x,
        (0, _) => knots[0] - 1.0,
        (i, n) if i == n => knots[n - 1] + 1.0,
        (i, _) => 0.5 * (knots[i - 1] + knots[i]),
    };
    let (s, c) = piece(probe);
    s * x + c
}

fn relu_arc(rng: &mut Normal, dim: usize) -> ArcOp {
    ArcOp::relu_affine(rng.matrix(dim, dim), rng.vector(dim))
}

/// Graph with nodes I, c, n2, b, a, p, q, r, s, t, O where the longest path
/// into `a` has four arcs and level 5 holds exactly `s` and `t`.
pub fn nine_fixture(seed: u64) -> DagNet {
    let mut rng = Normal::new(seed);
    let d = 2;
    let mut b = DagBuilder::new("I", d);
    for n in ["c", "p", "q", "r"] {
        b.add_arc("I", n, relu_arc(&mut rng, d)).unwrap();
    }
    b.add_arc("c", "n2", relu_arc(&mut rng, d)).unwrap();
    b.add_arc("n2", "b", relu_arc(&mut rng, d)).unwrap();
    b.add_arc("b", "a", relu_arc(&mut rng, d)).unwrap();
    b.add_node("s", Combine::Sum).unwrap();
    b.add_arc("a", "s", relu_arc(&mut rng, d)).unwrap();
    b.add_arc("p", "s", relu_arc(&mut rng, d)).unwrap();
    b.add_arc("a", "t", relu_arc(&mut rng, d)).unwrap();
    b.add_arc("q", "t", ArcOp::relu_affine(rng.matrix(d, d), rng.vector(d))).unwrap();
    b.add_arc("r", "O", relu_arc(&mut rng, d)).unwrap();
    b.add_arc("s", "O", relu_arc(&mut rng, d)).unwrap();
    b.add_arc("t", "O", ArcOp::relu_affine(rng.matrix(d, 2 * d), rng.vector(d))).unwrap();
    b.freeze().unwrap()
}

/// Two-channel fusion in the plane whose channels cut along the axes and
/// along the diagonals.
pub fn parallel_fixture() -> DagNet {
    use ndarray::array;
    use unrectify::builders::{build_fusion, build_series, LayerSpec};
    let c1 = build_series(2, &[LayerSpec::relu(Array2::eye(2), Array1::zeros(2))]).unwrap();
    let c2 = build_series(2, &[LayerSpec::relu(array![[1.0, 1.0], [1.0, -1.0]], Array1::zeros(2))]).unwrap();
    let l = ndarray::concatenate![ndarray::Axis(1), Array2::<f64>::eye(2), Array2::<f64>::eye(2)];
    build_fusion(&[c1, c2], &l).unwrap()
}

/// Uniform grid on `[lo, hi]^2`, offset to avoid exact breakpoints.
pub fn grid(lo: f64, hi: f64, n: usize) -> Array2<f64> {
    let step = (hi - lo) / n as f64;
    let mut pts = Vec::with_capacity(2 * n * n);
    for i in 0..n {
        for j in 0..n {
            pts.push(lo + (i as f64 + 0.5) * step + 1e-7);
            pts.push(lo + (j as f64 + 0.5) * step + 3e-7);
        }
    }
    Array2::from_shape_vec((n * n, 2), pts).unwrap()
}

/// Longest input-to-node path lengths by explicit path enumeration.
pub fn brute_force_levels(net: &DagNet) -> Vec<usize> {
    let n = net.node_count();
    let input = net.node_index(net.input()).unwrap();
    let mut best = vec![0usize; n];
    fn walk(net: &DagNet, u: usize, len: usize, best: &mut [usize]) {
        best[u] = best[u].max(len);
        for &ai in net.out_arcs(u) {
            walk(net, net.arc_ends(ai).1, len + 1, best);
        }
    }
    walk(net, input, 0, &mut best);
    best
}
