//! Synthetic streams mixing an adversarial and a stochastic feature part.
//!
//! For node `i` at round `t`:
//!
//! - the label `y` is a fair coin in `{-1, +1}`;
//! - the adversarial part has entries uniform on `[sin(i) - 0.5, sin(i) + 0.5]`,
//!   a node-specific distribution unrelated to the label;
//! - the stochastic part is `N((y + 0.5 sin(t)) 1, I)`, a label-correlated
//!   Gaussian whose mean drifts with `t`;
//! - the features are `beta * adversarial + (1 - beta) * stochastic`.
//!
//! `i` is the 0-based node index and `t` the 1-based round. Each component is
//! drawn from its own counter stream keyed on `(seed, tag, i, t)`, so a
//! sample never depends on `beta`, on query order, or on other nodes.

use alloc::vec::Vec;

use crate::losses::LabeledSample;
use crate::rng::CounterStream;

const LABEL_TAG: u64 = 0x6c61_6265_6c00_0001;
const ADVERSARIAL_TAG: u64 = 0x6164_7665_7200_0002;
const STOCHASTIC_TAG: u64 = 0x7374_6f63_6800_0003;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DatagenError {
    #[error("beta = {0} is outside [0, 1]")]
    BadBeta(f64),
    #[error("feature dimension must be positive")]
    ZeroDim,
    #[error("node count must be positive")]
    ZeroNodes,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub beta: f64,
    pub n: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(dim: usize, beta: f64, n: usize, seed: u64) -> Result<Self, DatagenError> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(DatagenError::BadBeta(beta));
        }
        if dim == 0 {
            return Err(DatagenError::ZeroDim);
        }
        if n == 0 {
            return Err(DatagenError::ZeroNodes);
        }
        Ok(Self { dim, beta, n, seed })
    }
}

/// The three independent draws behind one synthetic sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleParts {
    pub label: i8,
    pub adversarial: Vec<f64>,
    pub stochastic: Vec<f64>,
}

pub fn sample_parts(spec: &SyntheticSpec, node: usize, round: u64) -> SampleParts {
    let (i, t) = (node as u64, round);
    let label = if CounterStream::new(spec.seed, LABEL_TAG, i, t).word(0) >> 63 == 1 { 1 } else { -1 };

    let center = libm::sin(node as f64);
    let adv = CounterStream::new(spec.seed, ADVERSARIAL_TAG, i, t);
    let adversarial = (0..spec.dim as u64).map(|k| center - 0.5 + adv.uniform(k)).collect();

    let mean = f64::from(label) + 0.5 * libm::sin(round as f64);
    let sto = CounterStream::new(spec.seed, STOCHASTIC_TAG, i, t);
    let stochastic = (0..spec.dim as u64).map(|k| mean + sto.normal(k)).collect();

    SampleParts { label, adversarial, stochastic }
}

/// Sample for 0-based `node` at 1-based `round`.
pub fn synthetic_sample(spec: &SyntheticSpec, node: usize, round: u64) -> LabeledSample {
    let parts = sample_parts(spec, node, round);
    let beta = spec.beta;
    let features = parts.adversarial.iter().zip(&parts.stochastic).map(|(a, s)| beta * a + (1.0 - beta) * s).collect();
    LabeledSample { features, label: parts.label }
}
