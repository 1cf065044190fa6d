//! Point-wise CPWL activations and the MaxLU block activation.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{CpwlSpec, OpError};

/// Activation pattern of one activation layer: one entry per input
/// coordinate. ReLU stores 0/1, CPWL stores the active-set bitmask, MaxLU2
/// stores the selection pair `[p1, p2]` of each block.
pub type Pattern = Vec<u64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Activation {
    Relu,
    /// `max(x1, x2, 0)` on consecutive pairs, mapping `2k -> k`.
    Maxlu2,
    Cpwl(CpwlSpec),
}

impl Activation {
    pub fn out_dim(&self, in_dim: usize) -> Result<usize, OpError> {
        match self {
            Activation::Maxlu2 if in_dim % 2 != 0 => Err(OpError::DimMismatch {
                expected: in_dim + 1,
                found: in_dim,
            }),
            Activation::Maxlu2 => Ok(in_dim / 2),
            _ => Ok(in_dim),
        }
    }

    /// Bound on the norm of the un-rectifying matrix over all inputs.
    pub fn uniform_bound(&self) -> f64 {
        match self {
            Activation::Relu | Activation::Maxlu2 => 1.0,
            Activation::Cpwl(spec) => spec.max_abs_slope(),
        }
    }

    pub fn pattern(&self, v: &Array1<f64>) -> Result<Pattern, OpError> {
        self.out_dim(v.len())?;
        Ok(match self {
            Activation::Relu => v.iter().map(|&x| u64::from(x > 0.0)).collect(),
            Activation::Cpwl(spec) => v.iter().map(|&x| spec.pattern(x)).collect(),
            Activation::Maxlu2 => v
                .to_vec()
                .chunks_exact(2)
                .flat_map(|b| maxlu2_selection(b[0], b[1]))
                .collect(),
        })
    }

    /// Applies the linear piece selected by `pattern`. Bitwise identical to
    /// [`Activation::apply`] when `pattern` is the pattern of `v`.
    pub fn apply_frozen(&self, pattern: &[u64], v: &Array1<f64>) -> Result<Array1<f64>, OpError> {
        if pattern.len() != v.len() {
            return Err(OpError::DimMismatch { expected: v.len(), found: pattern.len() });
        }
        self.out_dim(v.len())?;
        Ok(match self {
            Activation::Relu => {
                v.iter().zip(pattern).map(|(&x, &p)| if p != 0 { x } else { 0.0 }).collect()
            }
            Activation::Cpwl(spec) => {
                v.iter().zip(pattern).map(|(&x, &p)| spec.apply_frozen(p, x)).collect()
            }
            Activation::Maxlu2 => (0..v.len() / 2)
                .map(|k| {
                    if pattern[2 * k] != 0 {
                        v[2 * k]
                    } else if pattern[2 * k + 1] != 0 {
                        v[2 * k + 1]
                    } else {
                        0.0
                    }
                })
                .collect(),
        })
    }

    pub fn apply(&self, v: &Array1<f64>) -> Result<(Array1<f64>, Pattern), OpError> {
        let pattern = self.pattern(v)?;
        let out = self.apply_frozen(&pattern, v)?;
        Ok((out, pattern))
    }

    /// The affine map `u -> J u + c` this activation equals on the region
    /// selected by `pattern`.
    pub fn frozen_affine(&self, pattern: &[u64]) -> Result<(Array2<f64>, Array1<f64>), OpError> {
        let n = pattern.len();
        let m = self.out_dim(n)?;
        let mut jac = Array2::zeros((m, n));
        let mut offset = Array1::zeros(m);
        match self {
            Activation::Relu => {
                for (i, &p) in pattern.iter().enumerate() {
                    if p != 0 {
                        jac[[i, i]] = 1.0;
                    }
                }
            }
            Activation::Cpwl(spec) => {
                for (i, &p) in pattern.iter().enumerate() {
                    let (slope, intercept) = spec.frozen_affine(p);
                    jac[[i, i]] = slope;
                    offset[i] = intercept;
                }
            }
            Activation::Maxlu2 => {
                for k in 0..m {
                    if pattern[2 * k] != 0 {
                        jac[[k, 2 * k]] = 1.0;
                    } else if pattern[2 * k + 1] != 0 {
                        jac[[k, 2 * k + 1]] = 1.0;
                    }
                }
            }
        }
        Ok((jac, offset))
    }
}

/// `[1, 0]` when `x1 >= x2` and `x1 > 0`, `[0, 1]` when `x2 > 0` and
/// `x2 > x1`, `[0, 0]` otherwise.
fn maxlu2_selection(x1: f64, x2: f64) -> [u64; 2] {
    if x1 >= x2 && x1 > 0.0 {
        [1, 0]
    } else if x2 > 0.0 && x2 > x1 {
        [0, 1]
    } else {
        [0, 0]
    }
}
