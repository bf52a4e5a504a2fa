//! Instantaneous losses for the online rounds.

use alloc::vec::Vec;

use crate::linalg::{dot, norm_sq};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LossError {
    #[error("model has dimension {model} but features have dimension {features}")]
    DimensionMismatch { model: usize, features: usize },
    #[error("no samples to bound")]
    EmptyDataset,
    #[error("label {0} is not -1 or +1")]
    BadLabel(i8),
    #[error("regularization weight {0} must be non-negative")]
    BadGamma(f64),
}

/// Feature vector with a binary label in `{-1, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    pub label: i8,
}

impl LabeledSample {
    pub fn new(features: Vec<f64>, label: i8) -> Result<Self, LossError> {
        if label != 1 && label != -1 {
            return Err(LossError::BadLabel(label));
        }
        Ok(Self { features, label })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.features.len()
    }

    #[inline]
    pub fn y(&self) -> f64 {
        f64::from(self.label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `log(1 + exp(-y a^T x)) + gamma/2 ||x||^2`
    RegularizedLogistic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    pub gamma: f64,
}

impl LossSpec {
    pub fn logistic(gamma: f64) -> Result<Self, LossError> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(LossError::BadGamma(gamma));
        }
        Ok(Self { kind: LossKind::RegularizedLogistic, gamma })
    }
}

/// `log(1 + e^z)` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + libm::log1p(libm::exp(-z.abs()))
}

/// `1 / (1 + e^-z)` without overflow.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

fn check_dim(x: &[f64], s: &LabeledSample) -> Result<(), LossError> {
    if x.len() != s.dim() {
        return Err(LossError::DimensionMismatch { model: x.len(), features: s.dim() });
    }
    Ok(())
}

pub fn loss(x: &[f64], s: &LabeledSample, spec: &LossSpec) -> Result<f64, LossError> {
    check_dim(x, s)?;
    match spec.kind {
        LossKind::RegularizedLogistic => {
            let z = -s.y() * dot(&s.features, x);
            Ok(softplus(z) + 0.5 * spec.gamma * norm_sq(x))
        }
    }
}

pub fn gradient(x: &[f64], s: &LabeledSample, spec: &LossSpec) -> Result<Vec<f64>, LossError> {
    loss_and_gradient(x, s, spec).map(|(_, g)| g)
}

/// Loss value and gradient sharing one margin computation.
pub fn loss_and_gradient(x: &[f64], s: &LabeledSample, spec: &LossSpec) -> Result<(f64, Vec<f64>), LossError> {
    check_dim(x, s)?;
    match spec.kind {
        LossKind::RegularizedLogistic => {
            let y = s.y();
            let z = -y * dot(&s.features, x);
            let value = softplus(z) + 0.5 * spec.gamma * norm_sq(x);
            let coef = -y * sigmoid(z);
            let grad = s.features.iter().zip(x).map(|(a, xi)| coef * a + spec.gamma * xi).collect();
            Ok((value, grad))
        }
    }
}

/// Lipschitz constant of the gradient over a sample set:
/// `0.25 * max ||a||^2 + gamma` (the logistic curvature is at most 1/4).
pub fn smoothness_bound(samples: &[LabeledSample], spec: &LossSpec) -> Result<f64, LossError> {
    let max_sq = samples.iter().map(|s| norm_sq(&s.features)).reduce(f64::max).ok_or(LossError::EmptyDataset)?;
    Ok(0.25 * max_sq + spec.gamma)
}
