//! Univariate continuous piecewise-linear activations written as a
//! superposition of shifted ReLUs:
//!
//! ```text
//! rho(x) = sum_i r_i * relu(x - a_i) + sum_j l_j * relu(t_j - x)
//! ```
//!
//! The "right" terms switch on above their breakpoint `a_i`, the "left"
//! terms switch on below `t_j`. At an exact breakpoint the term is inactive
//! (`relu(0) = 0`), which fixes the activation pattern used for region
//! signatures.

use serde::{Deserialize, Serialize};

use super::OpError;

/// Maximum number of terms; patterns are stored as a `u64` bitmask.
pub const MAX_TERMS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCpwl", into = "RawCpwl")]
pub struct CpwlSpec {
    right: Vec<(f64, f64)>,
    left: Vec<(f64, f64)>,
}

#[derive(Serialize, Deserialize)]
struct RawCpwl {
    r: Vec<f64>,
    a: Vec<f64>,
    l: Vec<f64>,
    t: Vec<f64>,
}

impl TryFrom<RawCpwl> for CpwlSpec {
    type Error = OpError;

    fn try_from(raw: RawCpwl) -> Result<Self, Self::Error> {
        if raw.r.len() != raw.a.len() {
            return Err(OpError::InvalidSpec(format!(
                "cpwl: {} right slopes but {} breakpoints",
                raw.r.len(),
                raw.a.len()
            )));
        }
        if raw.l.len() != raw.t.len() {
            return Err(OpError::InvalidSpec(format!(
                "cpwl: {} left slopes but {} breakpoints",
                raw.l.len(),
                raw.t.len()
            )));
        }
        CpwlSpec::new(
            raw.r.into_iter().zip(raw.a).collect(),
            raw.l.into_iter().zip(raw.t).collect(),
        )
    }
}

impl From<CpwlSpec> for RawCpwl {
    fn from(spec: CpwlSpec) -> Self {
        RawCpwl {
            r: spec.right.iter().map(|p| p.0).collect(),
            a: spec.right.iter().map(|p| p.1).collect(),
            l: spec.left.iter().map(|p| p.0).collect(),
            t: spec.left.iter().map(|p| p.1).collect(),
        }
    }
}

impl CpwlSpec {
    /// `right` holds `(r_i, a_i)` pairs, `left` holds `(l_j, t_j)` pairs.
    pub fn new(right: Vec<(f64, f64)>, left: Vec<(f64, f64)>) -> Result<Self, OpError> {
        if right.len() + left.len() > MAX_TERMS {
            return Err(OpError::InvalidSpec(format!(
                "cpwl: {} terms exceeds the limit of {MAX_TERMS}",
                right.len() + left.len()
            )));
        }
        let finite = right.iter().chain(&left).all(|(s, b)| s.is_finite() && b.is_finite());
        if !finite {
            return Err(OpError::InvalidSpec("cpwl: non-finite slope or breakpoint".into()));
        }
        Ok(Self { right, left })
    }

    pub fn relu() -> Self {
        Self { right: vec![(1.0, 0.0)], left: vec![] }
    }

    /// `|x| = relu(x) + relu(-x)`.
    pub fn abs() -> Self {
        Self { right: vec![(1.0, 0.0)], left: vec![(1.0, 0.0)] }
    }

    /// Leaky ReLU with negative-side slope `alpha`.
    pub fn leaky(alpha: f64) -> Self {
        Self { right: vec![(1.0, 0.0)], left: vec![(-alpha, 0.0)] }
    }

    pub fn right_terms(&self) -> &[(f64, f64)] {
        &self.right
    }

    pub fn left_terms(&self) -> &[(f64, f64)] {
        &self.left
    }

    pub fn num_terms(&self) -> usize {
        self.right.len() + self.left.len()
    }

    /// Active-set bitmask at `x`: bit `i` for right term `i` when `x > a_i`,
    /// bit `R + j` for left term `j` when `x < t_j`.
    pub fn pattern(&self, x: f64) -> u64 {
        let mut mask = 0u64;
        for (i, &(_, a)) in self.right.iter().enumerate() {
            if x > a {
                mask |= 1 << i;
            }
        }
        let offset = self.right.len();
        for (j, &(_, t)) in self.left.iter().enumerate() {
            if x < t {
                mask |= 1 << (offset + j);
            }
        }
        mask
    }

    /// Evaluates the affine piece selected by `mask` at `x`.
    pub fn apply_frozen(&self, mask: u64, x: f64) -> f64 {
        let mut acc = 0.0;
        for (i, &(r, a)) in self.right.iter().enumerate() {
            if mask & (1 << i) != 0 {
                acc += r * (x - a);
            }
        }
        let offset = self.right.len();
        for (j, &(l, t)) in self.left.iter().enumerate() {
            if mask & (1 << (offset + j)) != 0 {
                acc += l * (t - x);
            }
        }
        acc
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.apply_frozen(self.pattern(x), x)
    }

    /// Un-rectifying diagonal entry at `x`: the slope of the active piece and
    /// the active set that selects it.
    pub fn unrectify(&self, x: f64) -> (f64, u64) {
        let mask = self.pattern(x);
        (self.frozen_affine(mask).0, mask)
    }

    /// `(slope, intercept)` of the piece selected by `mask`.
    pub fn frozen_affine(&self, mask: u64) -> (f64, f64) {
        let mut slope = 0.0;
        let mut intercept = 0.0;
        for (i, &(r, a)) in self.right.iter().enumerate() {
            if mask & (1 << i) != 0 {
                slope += r;
                intercept -= r * a;
            }
        }
        let offset = self.right.len();
        for (j, &(l, t)) in self.left.iter().enumerate() {
            if mask & (1 << (offset + j)) != 0 {
                slope -= l;
                intercept += l * t;
            }
        }
        (slope, intercept)
    }

    /// Largest absolute piece slope, found by sweeping the sorted breakpoints
    /// left to right and accumulating slope changes.
    pub fn max_abs_slope(&self) -> f64 {
        // Leftmost piece: every left term active, no right term active.
        let mut slope: f64 = -self.left.iter().map(|&(l, _)| l).sum::<f64>();
        let mut events: Vec<(f64, f64)> = self
            .right
            .iter()
            .map(|&(r, a)| (a, r))
            .chain(self.left.iter().map(|&(l, t)| (t, l)))
            .collect();
        events.sort_by(|p, q| p.0.total_cmp(&q.0));
        let mut best = slope.abs();
        let mut k = 0;
        while k < events.len() {
            let at = events[k].0;
            while k < events.len() && events[k].0 == at {
                slope += events[k].1;
                k += 1;
            }
            best = best.max(slope.abs());
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_values_and_patterns() {
        let relu = CpwlSpec::relu();
        assert_eq!(relu.eval(-1.0), 0.0);
        assert_eq!(relu.eval(2.5), 2.5);
        assert_eq!(relu.unrectify(2.0), (1.0, 1));
        assert_eq!(relu.unrectify(-2.0), (0.0, 0));
        // breakpoint convention: inactive
        assert_eq!(relu.pattern(0.0), 0);
    }

    #[test]
    fn abs_value_left_branch() {
        let abs = CpwlSpec::abs();
        assert_eq!(abs.eval(-3.0), 3.0);
        let (slope, mask) = abs.unrectify(-3.0);
        assert_eq!(slope, -1.0);
        assert_eq!(mask, 0b10);
    }

    #[test]
    fn uniform_bounds() {
        assert_eq!(CpwlSpec::relu().max_abs_slope(), 1.0);
        assert_eq!(CpwlSpec::leaky(0.1).max_abs_slope(), 1.0);
        assert_eq!(CpwlSpec::abs().max_abs_slope(), 1.0);
        // slopes -0.5 | 2 | -1
        let spec = CpwlSpec::new(vec![(2.0, 0.0), (-3.0, 1.0)], vec![(0.5, 0.0)]).unwrap();
        assert_eq!(spec.max_abs_slope(), 2.0);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(CpwlSpec::new(vec![(f64::NAN, 0.0)], vec![]).is_err());
        let many = vec![(1.0, 0.0); MAX_TERMS + 1];
        assert!(CpwlSpec::new(many, vec![]).is_err());
        let json = r#"{"r":[1.0],"a":[],"l":[],"t":[]}"#;
        assert!(serde_json::from_str::<CpwlSpec>(json).is_err());
    }

    #[test]
    fn frozen_affine_matches_eval_inside_piece() {
        let spec = CpwlSpec::new(vec![(1.0, -1.0), (-2.0, 0.5)], vec![(0.7, 0.2)]).unwrap();
        for &x in &[-3.0, -0.3, 0.3, 0.9, 4.0] {
            let (slope, mask) = spec.unrectify(x);
            let (_, intercept) = spec.frozen_affine(mask);
            assert!((slope * x + intercept - spec.eval(x)).abs() < 1e-12);
        }
    }
}
