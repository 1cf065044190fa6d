//! Arc operations: the basic elements a network is assembled from.
//!
//! An arc carries one of identity, a linear map, an affine map, an
//! activation, an activation after an affine map, a transform, or a
//! transform after an affine map.

mod activation;
mod cpwl;
mod transform;

pub use activation::{Activation, Pattern};
pub use cpwl::{CpwlSpec, MAX_TERMS};
pub use transform::{softmax, Transform};

use ndarray::{Array1, Array2};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OpError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("{0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArcOp {
    Identity,
    Linear { weight: Array2<f64> },
    Affine { weight: Array2<f64>, bias: Array1<f64> },
    Activation(Activation),
    ActivationAffine { act: Activation, weight: Array2<f64>, bias: Array1<f64> },
    Transform(Transform),
    TransformAffine { sigma: Transform, weight: Array2<f64>, bias: Array1<f64> },
}

impl ArcOp {
    pub fn linear(weight: Array2<f64>) -> Self {
        ArcOp::Linear { weight }
    }

    pub fn affine(weight: Array2<f64>, bias: Array1<f64>) -> Self {
        ArcOp::Affine { weight, bias }
    }

    pub fn relu_affine(weight: Array2<f64>, bias: Array1<f64>) -> Self {
        ArcOp::ActivationAffine { act: Activation::Relu, weight, bias }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ArcOp::Identity => "identity",
            ArcOp::Linear { .. } => "linear",
            ArcOp::Affine { .. } => "affine",
            ArcOp::Activation(_) => "activation",
            ArcOp::ActivationAffine { .. } => "activation_affine",
            ArcOp::Transform(_) => "transform",
            ArcOp::TransformAffine { .. } => "transform_affine",
        }
    }

    /// Linear part, if the op has one.
    pub fn weight(&self) -> Option<&Array2<f64>> {
        match self {
            ArcOp::Linear { weight }
            | ArcOp::Affine { weight, .. }
            | ArcOp::ActivationAffine { weight, .. }
            | ArcOp::TransformAffine { weight, .. } => Some(weight),
            _ => None,
        }
    }

    pub fn weight_mut(&mut self) -> Option<&mut Array2<f64>> {
        match self {
            ArcOp::Linear { weight }
            | ArcOp::Affine { weight, .. }
            | ArcOp::ActivationAffine { weight, .. }
            | ArcOp::TransformAffine { weight, .. } => Some(weight),
            _ => None,
        }
    }

    pub fn bias(&self) -> Option<&Array1<f64>> {
        match self {
            ArcOp::Affine { bias, .. }
            | ArcOp::ActivationAffine { bias, .. }
            | ArcOp::TransformAffine { bias, .. } => Some(bias),
            _ => None,
        }
    }

    pub fn activation(&self) -> Option<&Activation> {
        match self {
            ArcOp::Activation(act) | ArcOp::ActivationAffine { act, .. } => Some(act),
            _ => None,
        }
    }

    pub fn transform(&self) -> Option<&Transform> {
        match self {
            ArcOp::Transform(sigma) | ArcOp::TransformAffine { sigma, .. } => Some(sigma),
            _ => None,
        }
    }

    pub fn is_activation(&self) -> bool {
        self.activation().is_some()
    }

    pub fn is_transform(&self) -> bool {
        self.transform().is_some()
    }

    /// Input dimension fixed by the op's weight, if any.
    pub fn required_in_dim(&self) -> Option<usize> {
        self.weight().map(|w| w.ncols())
    }

    /// Checks finiteness and weight/bias agreement.
    pub fn check(&self) -> Result<(), OpError> {
        if let Some(w) = self.weight() {
            if !w.iter().all(|x| x.is_finite()) {
                return Err(OpError::NonFinite("weight"));
            }
        }
        if let Some(b) = self.bias() {
            if !b.iter().all(|x| x.is_finite()) {
                return Err(OpError::NonFinite("bias"));
            }
            let rows = self.weight().map_or(0, |w| w.nrows());
            if b.len() != rows {
                return Err(OpError::DimMismatch { expected: rows, found: b.len() });
            }
        }
        if let Some(Transform::Softmax { lambda }) = self.transform() {
            if !lambda.is_finite() {
                return Err(OpError::NonFinite("softmax lambda"));
            }
        }
        Ok(())
    }

    pub fn out_dim(&self, in_dim: usize) -> Result<usize, OpError> {
        let inner = match self.required_in_dim() {
            Some(cols) if cols != in_dim => {
                return Err(OpError::DimMismatch { expected: cols, found: in_dim })
            }
            Some(_) => self.weight().map_or(in_dim, |w| w.nrows()),
            None => in_dim,
        };
        match self {
            ArcOp::Activation(act) | ArcOp::ActivationAffine { act, .. } => act.out_dim(inner),
            ArcOp::Transform(sigma) | ArcOp::TransformAffine { sigma, .. } => sigma.out_dim(inner),
            _ => Ok(inner),
        }
    }

    /// The pre-activation value: the affine part applied to `v`.
    fn pre(&self, v: &Array1<f64>) -> Result<Array1<f64>, OpError> {
        if let Some(w) = self.weight() {
            if w.ncols() != v.len() {
                return Err(OpError::DimMismatch { expected: w.ncols(), found: v.len() });
            }
            let mut out = w.dot(v);
            if let Some(b) = self.bias() {
                out += b;
            }
            Ok(out)
        } else {
            Ok(v.clone())
        }
    }

    /// Evaluates the op; activation arcs also return their pattern.
    pub fn apply(&self, v: &Array1<f64>) -> Result<(Array1<f64>, Option<Pattern>), OpError> {
        let pre = self.pre(v)?;
        match self {
            ArcOp::Activation(act) | ArcOp::ActivationAffine { act, .. } => {
                let (out, pattern) = act.apply(&pre)?;
                Ok((out, Some(pattern)))
            }
            ArcOp::Transform(sigma) | ArcOp::TransformAffine { sigma, .. } => {
                Ok((sigma.apply(&pre)?, None))
            }
            _ => Ok((pre, None)),
        }
    }

    /// Uniform bound `d` of this arc: the activation's un-rectifying bound,
    /// the transform's Lipschitz constant, or 1 for activation-free arcs.
    pub fn uniform_bound(&self) -> f64 {
        if let Some(act) = self.activation() {
            act.uniform_bound()
        } else if let Some(sigma) = self.transform() {
            sigma.uniform_bound()
        } else {
            1.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_bound_per_kind() {
        assert_eq!(ArcOp::Activation(Activation::Relu).uniform_bound(), 1.0);
        let leaky = Activation::Cpwl(CpwlSpec::leaky(0.1));
        assert_eq!(ArcOp::Activation(leaky).uniform_bound(), 1.0);
        let soft = ArcOp::Transform(Transform::Softmax { lambda: 3.0 });
        assert_eq!(soft.uniform_bound(), 3.0);
        assert_eq!(ArcOp::Identity.uniform_bound(), 1.0);
        assert_eq!(ArcOp::linear(array![[5.0]]).uniform_bound(), 1.0);
    }

    #[test]
    fn out_dims() {
        let op = ArcOp::affine(Array2::zeros((2, 2)), Array1::zeros(2));
        assert_eq!(op.out_dim(3), Err(OpError::DimMismatch { expected: 2, found: 3 }));
        let op = ArcOp::ActivationAffine {
            act: Activation::Maxlu2,
            weight: Array2::zeros((4, 3)),
            bias: Array1::zeros(4),
        };
        assert_eq!(op.out_dim(3), Ok(2));
        assert_eq!(ArcOp::Identity.out_dim(7), Ok(7));
    }

    #[test]
    fn check_rejects_bad_weights() {
        let op = ArcOp::affine(array![[f64::NAN]], array![0.0]);
        assert!(op.check().is_err());
        let op = ArcOp::affine(array![[1.0]], array![0.0, 1.0]);
        assert!(op.check().is_err());
    }

    #[test]
    fn relu_affine_apply() {
        let op = ArcOp::relu_affine(array![[1.0, 0.0], [0.0, -1.0]], array![0.5, 0.0]);
        let (out, pattern) = op.apply(&array![1.0, 2.0]).unwrap();
        assert_eq!(out, array![1.5, 0.0]);
        assert_eq!(pattern, Some(vec![1, 0]));
    }
}
