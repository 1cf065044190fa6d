//! Non-linear transforms: maps that treat every input with the same function
//! and carry no partition semantics.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::OpError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Transform {
    /// `x_i -> exp(lambda x_i) / sum_j exp(lambda x_j)`.
    Softmax { lambda: f64 },
    Sigmoid,
    Tanh,
    /// Attention scores from a stacked `[q_1..q_T, k_1..k_T]` input: the
    /// inner products of the normalized vectors, `T*T` outputs in row-major
    /// `(i, j)` order.
    CosineScores { seq_len: usize, dim: usize },
    /// Attention read-out from a stacked `[P (T*T, row-major), v_1..v_T]`
    /// input: `b_i = sum_j P_ij v_j`.
    Mix { seq_len: usize, dim: usize },
}

impl Transform {
    pub fn out_dim(&self, in_dim: usize) -> Result<usize, OpError> {
        let (expected, out) = match *self {
            Transform::Softmax { .. } | Transform::Sigmoid | Transform::Tanh => (in_dim, in_dim),
            Transform::CosineScores { seq_len, dim } => (2 * seq_len * dim, seq_len * seq_len),
            Transform::Mix { seq_len, dim } => (seq_len * seq_len + seq_len * dim, seq_len * dim),
        };
        if expected != in_dim {
            return Err(OpError::DimMismatch { expected, found: in_dim });
        }
        Ok(out)
    }

    /// Lipschitz constant used as this transform's uniform bound. The
    /// bilinear attention transforms have no global constant.
    pub fn uniform_bound(&self) -> f64 {
        match *self {
            Transform::Softmax { lambda } => lambda.abs(),
            Transform::Sigmoid | Transform::Tanh => 1.0,
            Transform::CosineScores { .. } | Transform::Mix { .. } => f64::INFINITY,
        }
    }

    pub fn apply(&self, v: &Array1<f64>) -> Result<Array1<f64>, OpError> {
        self.out_dim(v.len())?;
        Ok(match *self {
            Transform::Softmax { lambda } => softmax(v, lambda),
            Transform::Sigmoid => v.mapv(|x| 1.0 / (1.0 + (-x).exp())),
            Transform::Tanh => v.mapv(f64::tanh),
            Transform::CosineScores { seq_len, dim } => {
                let unit = |k: usize| -> Vec<f64> {
                    let s = v.slice(ndarray::s![k * dim..(k + 1) * dim]);
                    let norm = s.dot(&s).sqrt();
                    if norm > 0.0 {
                        s.iter().map(|x| x / norm).collect()
                    } else {
                        vec![0.0; dim]
                    }
                };
                let queries: Vec<_> = (0..seq_len).map(unit).collect();
                let keys: Vec<_> = (seq_len..2 * seq_len).map(unit).collect();
                let mut out = Array1::zeros(seq_len * seq_len);
                for (i, q) in queries.iter().enumerate() {
                    for (j, k) in keys.iter().enumerate() {
                        out[i * seq_len + j] = q.iter().zip(k).map(|(a, b)| a * b).sum();
                    }
                }
                out
            }
            Transform::Mix { seq_len, dim } => {
                let base = seq_len * seq_len;
                let mut out = Array1::zeros(seq_len * dim);
                for i in 0..seq_len {
                    for j in 0..seq_len {
                        let p = v[i * seq_len + j];
                        for c in 0..dim {
                            out[i * dim + c] += p * v[base + j * dim + c];
                        }
                    }
                }
                out
            }
        })
    }
}

/// Softmax with max-subtraction.
pub fn softmax(v: &Array1<f64>, lambda: f64) -> Array1<f64> {
    if v.is_empty() {
        return Array1::zeros(0);
    }
    let scaled = v.mapv(|x| lambda * x);
    let max = scaled.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let exps = scaled.mapv(|x| (x - max).exp());
    let total = exps.sum();
    exps / total
}
