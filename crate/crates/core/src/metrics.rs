//! Performance measures over finished runs, empirical estimates of the
//! analysis constants, and the regret bound itself.

use alloc::vec;
use alloc::vec::Vec;

use crate::engine::{RunArtifact, SampleSource};
use crate::linalg::{axpy, cholesky_solve, dist_sq, dot, norm, Matrix};
use crate::losses::{loss, loss_and_gradient, sigmoid, smoothness_bound, LabeledSample, LossError, LossSpec};

pub const COMPARATOR_GRAD_TOL: f64 = 1e-8;
pub const COMPARATOR_MAX_ITERS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("run has no rounds")]
    EmptyRun,
    #[error("comparator did not converge after {iters} iterations (gradient norm {grad_norm})")]
    NonConvergence { iters: usize, grad_norm: f64 },
    #[error("comparator has dimension {got}, data has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("degenerate parameters: {0}")]
    DegenerateParameters(&'static str),
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// One row of the per-round metrics table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub t: u64,
    /// Mean of the `n` instantaneous losses this round.
    pub avg_loss: f64,
    /// `(1/n) sum_i ||x_i - xbar||^2` of the models used this round.
    pub consensus_error: f64,
    /// Sum of every instantaneous loss up to and including this round.
    pub cum_loss: f64,
}

/// `(1/T) sum_t avg_loss(t)`, i.e. the loss averaged over nodes and rounds.
pub fn average_loss(records: &[MetricsRecord]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyRun);
    }
    Ok(records.iter().map(|r| r.avg_loss).sum::<f64>() / records.len() as f64)
}

/// Mean squared distance of the rows of `models` to their average.
pub fn consensus_error(models: &Matrix) -> f64 {
    let n = models.rows();
    if n == 0 {
        return 0.0;
    }
    let mean = models.row_mean();
    models.iter_rows().map(|r| dist_sq(r, &mean)).sum::<f64>() / n as f64
}

/// A smooth convex objective for the offline comparator.
pub trait SmoothObjective {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    /// Lipschitz constant of [`SmoothObjective::gradient`].
    fn smoothness(&self) -> f64;
    /// Exact Hessian, when cheap enough to form. Enables Newton steps in
    /// [`offline_comparator`].
    fn hessian(&self, _x: &[f64]) -> Option<Matrix> {
        None
    }
}

/// Mean regularized loss over a pooled sample set.
#[derive(Debug, Clone, Copy)]
pub struct EmpiricalLoss<'a> {
    samples: &'a [LabeledSample],
    spec: LossSpec,
    dim: usize,
    smoothness: f64,
}

impl<'a> EmpiricalLoss<'a> {
    pub fn new(samples: &'a [LabeledSample], spec: LossSpec) -> Result<Self, MetricsError> {
        let smoothness = smoothness_bound(samples, &spec)?;
        let dim = samples[0].dim();
        if let Some(bad) = samples.iter().find(|s| s.dim() != dim) {
            return Err(MetricsError::DimensionMismatch { expected: dim, got: bad.dim() });
        }
        Ok(Self { samples, spec, dim, smoothness })
    }
}

impl SmoothObjective for EmpiricalLoss<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        let total: f64 = self.samples.iter().map(|s| loss(x, s, &self.spec).expect("dims checked")).sum();
        total / self.samples.len() as f64
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        for s in self.samples {
            let (_, gs) = loss_and_gradient(x, s, &self.spec).expect("dims checked");
            for (acc, v) in g.iter_mut().zip(&gs) {
                *acc += v;
            }
        }
        let inv = 1.0 / self.samples.len() as f64;
        g.iter_mut().for_each(|v| *v *= inv);
        g
    }

    // Each sample's gradient is L-Lipschitz, so their mean is too.
    fn smoothness(&self) -> f64 {
        self.smoothness
    }

    fn hessian(&self, x: &[f64]) -> Option<Matrix> {
        let d = self.dim;
        let mut h = Matrix::zeros(d, d);
        for s in self.samples {
            let z = s.y() * dot(&s.features, x);
            let p = sigmoid(z);
            let w = p * (1.0 - p);
            for i in 0..d {
                let wa = w * s.features[i];
                for j in 0..=i {
                    h[(i, j)] += wa * s.features[j];
                }
            }
        }
        let inv = 1.0 / self.samples.len() as f64;
        for i in 0..d {
            for j in 0..=i {
                let v = h[(i, j)] * inv + if i == j { self.spec.gamma } else { 0.0 };
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        Some(h)
    }
}

/// Best fixed model in hindsight, started from the origin and stopped once
/// the gradient norm drops to `1e-8`.
///
/// Objectives exposing a Hessian take damped Newton steps (backtracking on
/// the objective value); otherwise, or when the Hessian is not positive
/// definite, the step is plain gradient descent with step `1/L`.
pub fn offline_comparator<O: SmoothObjective>(objective: &O) -> Result<Vec<f64>, MetricsError> {
    let step = 1.0 / objective.smoothness();
    if !(step.is_finite() && step > 0.0) {
        return Err(MetricsError::DegenerateParameters("objective smoothness must be positive"));
    }
    let mut x = vec![0.0; objective.dim()];
    let mut grad_norm = f64::INFINITY;
    for _ in 0..COMPARATOR_MAX_ITERS {
        let g = objective.gradient(&x);
        grad_norm = norm(&g);
        if grad_norm <= COMPARATOR_GRAD_TOL {
            return Ok(x);
        }
        match objective.hessian(&x).and_then(|h| cholesky_solve(&h, &g)) {
            Some(dir) => x = newton_step(objective, &x, &g, &dir, step),
            None => axpy(-step, &g, &mut x),
        }
    }
    if norm(&objective.gradient(&x)) <= COMPARATOR_GRAD_TOL {
        return Ok(x);
    }
    Err(MetricsError::NonConvergence { iters: COMPARATOR_MAX_ITERS, grad_norm })
}

fn newton_step<O: SmoothObjective>(objective: &O, x: &[f64], g: &[f64], dir: &[f64], step: f64) -> Vec<f64> {
    let f0 = objective.value(x);
    let slope = dot(g, dir);
    let mut t = 1.0;
    for _ in 0..50 {
        let mut cand = x.to_vec();
        axpy(-t, dir, &mut cand);
        // Near the optimum the value stalls at rounding level; accept then too.
        let f = objective.value(&cand);
        if f <= f0 - 1e-4 * t * slope || (f - f0).abs() <= 1e-15 * f0.abs().max(1.0) {
            return cand;
        }
        t *= 0.5;
    }
    let mut fallback = x.to_vec();
    axpy(-step, g, &mut fallback);
    fallback
}

/// Every sample a run consumed, ordered by round then node.
pub fn run_samples<S: SampleSource + ?Sized>(source: &S, rounds: usize) -> Vec<LabeledSample> {
    let n = source.n();
    let mut out = Vec::with_capacity(rounds * n);
    for t in 1..=rounds as u64 {
        out.extend((0..n).map(|i| source.sample(i, t)));
    }
    out
}

/// `sum f(x_played) - sum f(comparator)` over `(played model, sample)` pairs.
pub fn static_regret<'a, I>(played: I, spec: &LossSpec, comparator: &[f64]) -> Result<f64, MetricsError>
where
    I: IntoIterator<Item = (&'a [f64], &'a LabeledSample)>,
{
    let mut regret = 0.0;
    for (x, s) in played {
        if s.dim() != comparator.len() {
            return Err(MetricsError::DimensionMismatch { expected: s.dim(), got: comparator.len() });
        }
        regret += loss(x, s, spec)? - loss(comparator, s, spec)?;
    }
    Ok(regret)
}

/// Static regret of a finished run, using its cumulative loss for the
/// played side and regenerating the samples for the comparator side.
pub fn run_static_regret<S: SampleSource + ?Sized>(
    artifact: &RunArtifact,
    source: &S,
    spec: &LossSpec,
    comparator: &[f64],
) -> Result<f64, MetricsError> {
    let played = artifact.records.last().ok_or(MetricsError::EmptyRun)?.cum_loss;
    if source.dim() != comparator.len() {
        return Err(MetricsError::DimensionMismatch { expected: source.dim(), got: comparator.len() });
    }
    let mut reference = 0.0;
    for t in 1..=artifact.rounds as u64 {
        for i in 0..artifact.n {
            reference += loss(comparator, &source.sample(i, t), spec)?;
        }
    }
    Ok(played - reference)
}

/// Empirical stand-ins for the gradient bound and gradient noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatedConstants {
    /// Largest realized gradient norm.
    pub g_hat: f64,
    /// Pooled sample standard deviation of gradient norms around each
    /// node's own mean norm.
    pub sigma_hat: f64,
}

/// Both values are proxies: expectations over the sample distribution are
/// not observable from one realization.
pub fn estimate_assumption_constants(artifact: &RunArtifact) -> Result<EstimatedConstants, MetricsError> {
    let n = artifact.n;
    let rounds = artifact.gradient_norms.len() / n.max(1);
    if rounds == 0 {
        return Err(MetricsError::EmptyRun);
    }
    let g_hat = artifact.gradient_norms.iter().copied().fold(0.0, f64::max);
    let mut means = vec![0.0; n];
    for row in artifact.gradient_norms.chunks_exact(n) {
        for (m, g) in means.iter_mut().zip(row) {
            *m += g;
        }
    }
    means.iter_mut().for_each(|m| *m /= rounds as f64);
    let mut ss = 0.0;
    for row in artifact.gradient_norms.chunks_exact(n) {
        ss += row.iter().zip(&means).map(|(g, m)| (g - m) * (g - m)).sum::<f64>();
    }
    let dof = artifact.gradient_norms.len() - n;
    let sigma_hat = if dof > 0 { libm::sqrt(ss / dof as f64) } else { 0.0 };
    Ok(EstimatedConstants { g_hat, sigma_hat })
}

/// Inputs to the regret bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub n: f64,
    pub t: f64,
    pub eta: f64,
    pub g: f64,
    pub sigma: f64,
    pub l: f64,
    pub rho: f64,
    pub r: f64,
    pub m: f64,
}

/// Regret upper bound for the decentralized method:
///
/// ```text
/// C0 = 2L(G^2 + s^2)/(1 - rho)^2,  C1 = 4L^2(G^2 + s^2)/(1 - rho)^2,  C2 = 2 + 1/(1 - rho)
/// bound = eta T s^2 + C0 n T eta^2 + C1 n T eta^3 + n/(2 eta) (4 sqrt(R) M + R) + C2 n eta T G^2
/// ```
pub fn theorem1_bound(p: &BoundParams) -> Result<f64, MetricsError> {
    if !(p.rho < 1.0) {
        return Err(MetricsError::DegenerateParameters("rho must be below 1"));
    }
    if !(p.eta > 0.0) {
        return Err(MetricsError::DegenerateParameters("eta must be positive"));
    }
    let fields = [p.n, p.t, p.g, p.sigma, p.l, p.rho, p.r, p.m];
    if fields.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(MetricsError::DegenerateParameters("parameters must be finite and non-negative"));
    }
    let gap = 1.0 - p.rho;
    let energy = p.g * p.g + p.sigma * p.sigma;
    let c0 = 2.0 * p.l * energy / (gap * gap);
    let c1 = 4.0 * p.l * p.l * energy / (gap * gap);
    let c2 = 2.0 + 1.0 / gap;
    let (n, t, eta) = (p.n, p.t, p.eta);
    Ok(eta * t * p.sigma * p.sigma
        + c0 * n * t * eta * eta
        + c1 * n * t * eta * eta * eta
        + n / (2.0 * eta) * (4.0 * libm::sqrt(p.r) * p.m + p.r)
        + c2 * n * eta * t * p.g * p.g)
}

/// Upper bound on `sum_{i,t} ||x_{i,t} - xbar_t||^2`:
/// `2 n T eta^2 (G^2 + sigma^2) / (1 - rho)^2`.
pub fn consensus_bound(n: f64, t: f64, eta: f64, g: f64, sigma: f64, rho: f64) -> Result<f64, MetricsError> {
    if !(rho < 1.0) {
        return Err(MetricsError::DegenerateParameters("rho must be below 1"));
    }
    let gap = 1.0 - rho;
    Ok(2.0 * n * t * eta * eta * (g * g + sigma * sigma) / (gap * gap))
}
