//! The round loop.
//!
//! Every round each node is shown its sample, suffers the loss at its current
//! model and computes the gradient there. Then, depending on the algorithm:
//!
//! - `Dog`: `x_i <- sum_j W[i][j] x_j - eta * g_i` (mix with neighbors, then step);
//! - `LocalOgd`: `x_i <- x_i - eta * g_i` (no communication);
//! - `Cog`: a single shared model steps along the mean of all `n` gradients.
//!
//! Gradients are evaluated through an [`Executor`], which may run nodes in
//! parallel; every reduction afterwards walks nodes in ascending order so
//! results do not depend on the executor.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::datagen::{synthetic_sample, SyntheticSpec};
use crate::ingest::NodeStreams;
use crate::linalg::{norm, Matrix};
use crate::losses::{loss_and_gradient, LabeledSample, LossError, LossSpec};
use crate::metrics::{consensus_error, MetricsRecord};
use crate::mixing::MixingMatrix;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite gradient at node {node}, round {round}")]
    NonFiniteGradient { node: usize, round: u64 },
    #[error("model diverged (non-finite entry) at round {round}")]
    DivergenceDetected { round: u64 },
    #[error("the decentralized algorithm needs a mixing matrix")]
    MissingMixing,
    #[error("learning rate must be positive and finite, got {0}")]
    BadLearningRate(f64),
    #[error("degenerate parameters: {0}")]
    DegenerateParameters(&'static str),
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// Runs one closure per node and returns the results in node order.
pub trait Executor {
    fn map_nodes<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Evaluates nodes one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map_nodes<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

/// Where node `i` gets its sample for round `t` (1-based).
pub trait SampleSource: Sync {
    fn n(&self) -> usize;
    fn dim(&self) -> usize;
    fn sample(&self, node: usize, round: u64) -> LabeledSample;
}

impl SampleSource for SyntheticSpec {
    fn n(&self) -> usize {
        self.n
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, node: usize, round: u64) -> LabeledSample {
        synthetic_sample(self, node, round)
    }
}

impl SampleSource for NodeStreams {
    fn n(&self) -> usize {
        self.streams.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, node: usize, round: u64) -> LabeledSample {
        NodeStreams::sample(self, node, round).clone()
    }
}

/// Stacked node models, one row per node, and the round they are used in.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub models: Matrix,
    pub round: u64,
}

impl NetworkState {
    /// All-zero models at round 1.
    pub fn zeros(n: usize, dim: usize) -> Self {
        Self { models: Matrix::zeros(n, dim), round: 1 }
    }

    pub fn n(&self) -> usize {
        self.models.rows()
    }

    pub fn dim(&self) -> usize {
        self.models.cols()
    }

    pub fn average(&self) -> Vec<f64> {
        self.models.row_mean()
    }
}

fn check_grads(state: &NetworkState, grads: &Matrix) -> Result<(), EngineError> {
    if grads.rows() != state.n() {
        return Err(EngineError::DimensionMismatch { expected: state.n(), got: grads.rows() });
    }
    if grads.cols() != state.dim() {
        return Err(EngineError::DimensionMismatch { expected: state.dim(), got: grads.cols() });
    }
    for i in 0..grads.rows() {
        if !grads.row(i).iter().all(|g| g.is_finite()) {
            return Err(EngineError::NonFiniteGradient { node: i, round: state.round });
        }
    }
    Ok(())
}

/// `X <- W X - eta G`, with row `i` of `grads` the gradient at the
/// pre-mixing model of node `i`.
pub fn dog_round(
    state: &NetworkState,
    w: &MixingMatrix,
    grads: &Matrix,
    eta: f64,
) -> Result<NetworkState, EngineError> {
    if w.n() != state.n() {
        return Err(EngineError::DimensionMismatch { expected: state.n(), got: w.n() });
    }
    check_grads(state, grads)?;
    let (n, dim) = (state.n(), state.dim());
    let mut next = Matrix::zeros(n, dim);
    for i in 0..n {
        let out = next.row_mut(i);
        for (j, &wij) in w.weights().row(i).iter().enumerate() {
            if wij == 0.0 {
                continue;
            }
            for (o, x) in out.iter_mut().zip(state.models.row(j)) {
                *o += wij * x;
            }
        }
        for (o, g) in out.iter_mut().zip(grads.row(i)) {
            *o -= eta * g;
        }
    }
    Ok(NetworkState { models: next, round: state.round + 1 })
}

/// `x_i <- x_i - eta g_i` for every node independently.
pub fn local_ogd_round(state: &NetworkState, grads: &Matrix, eta: f64) -> Result<NetworkState, EngineError> {
    check_grads(state, grads)?;
    let mut next = state.models.clone();
    for i in 0..next.rows() {
        for (o, g) in next.row_mut(i).iter_mut().zip(grads.row(i)) {
            *o -= eta * g;
        }
    }
    Ok(NetworkState { models: next, round: state.round + 1 })
}

/// Shared model step along the mean of the rows of `grads`, each evaluated
/// at `x`.
pub fn cog_round(x: &[f64], grads: &Matrix, eta: f64) -> Result<Vec<f64>, EngineError> {
    if grads.cols() != x.len() {
        return Err(EngineError::DimensionMismatch { expected: x.len(), got: grads.cols() });
    }
    for i in 0..grads.rows() {
        if !grads.row(i).iter().all(|g| g.is_finite()) {
            return Err(EngineError::NonFiniteGradient { node: i, round: 0 });
        }
    }
    let mean = grads.row_mean();
    Ok(x.iter().zip(&mean).map(|(xi, g)| xi - eta * g).collect())
}

/// Learning rate minimizing the leading terms of the regret bound:
/// `sqrt((1 - rho)(n M sqrt(R) + n R) / (n T G^2 + T sigma^2))`.
pub fn auto_learning_rate(
    n: usize,
    rounds: usize,
    g: f64,
    sigma: f64,
    r: f64,
    m: f64,
    rho: f64,
) -> Result<f64, EngineError> {
    let (n, t) = (n as f64, rounds as f64);
    if !(rho < 1.0) {
        return Err(EngineError::DegenerateParameters("rho must be below 1"));
    }
    let denom = n * t * g * g + t * sigma * sigma;
    if !(denom > 0.0) {
        return Err(EngineError::DegenerateParameters("n T G^2 + T sigma^2 must be positive"));
    }
    let numer = (1.0 - rho) * (n * m * libm::sqrt(r) + n * r);
    let eta = libm::sqrt(numer / denom);
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(EngineError::DegenerateParameters("learning rate evaluates to zero"));
    }
    Ok(eta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Dog,
    Cog,
    LocalOgd,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Dog => "dog",
            Algorithm::Cog => "cog",
            Algorithm::LocalOgd => "local_ogd",
        }
    }
}

/// Constants of the regret analysis: gradient bound `g`, gradient noise
/// `sigma`, squared domain diameter `r` and path budget `m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionConstants {
    pub g: f64,
    pub sigma: f64,
    pub r: f64,
    pub m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearningRate {
    Fixed(f64),
    Auto(AssumptionConstants),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub rounds: usize,
    pub eta: LearningRate,
    /// Required for `Dog`; ignored otherwise.
    pub mixing: Option<MixingMatrix>,
    pub loss: LossSpec,
    /// Project every model onto the Euclidean ball of this radius after each step.
    pub project_radius: Option<f64>,
    /// Keep the models of every round in the artifact.
    pub record_trajectory: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifact {
    pub algorithm: Algorithm,
    pub n: usize,
    pub rounds: usize,
    pub eta: f64,
    pub rho: Option<f64>,
    pub records: Vec<MetricsRecord>,
    pub final_state: NetworkState,
    /// `||grad f_{i,t}(x_{i,t})||`, row-major by round then node.
    pub gradient_norms: Vec<f64>,
    /// Models used in rounds `1..=T` when recording was requested.
    pub trajectory: Option<Vec<Matrix>>,
    pub warnings: Vec<String>,
}

impl RunArtifact {
    pub fn gradient_norm(&self, node: usize, round: u64) -> f64 {
        self.gradient_norms[(round as usize - 1) * self.n + node]
    }
}

/// Resolves the learning rate a config would use, given `n` nodes.
pub fn resolve_learning_rate(cfg: &RunConfig, n: usize) -> Result<f64, EngineError> {
    let eta = match cfg.eta {
        LearningRate::Fixed(eta) => eta,
        LearningRate::Auto(c) => {
            let rho = match (cfg.algorithm, &cfg.mixing) {
                (Algorithm::Dog, Some(w)) => w.rho(),
                (Algorithm::Dog, None) => return Err(EngineError::MissingMixing),
                // a single shared model behaves as perfect mixing
                (Algorithm::Cog, _) => 0.0,
                // no communication: nodes never agree
                (Algorithm::LocalOgd, _) if n > 1 => 1.0,
                (Algorithm::LocalOgd, _) => 0.0,
            };
            auto_learning_rate(n, cfg.rounds, c.g, c.sigma, c.r, c.m, rho)?
        }
    };
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(EngineError::BadLearningRate(eta));
    }
    Ok(eta)
}

struct NodeEval {
    loss: f64,
    grad: Vec<f64>,
}

fn evaluate<E: Executor, S: SampleSource + ?Sized>(
    exec: &E,
    source: &S,
    models: &Matrix,
    spec: &LossSpec,
    round: u64,
) -> Result<(Vec<f64>, Matrix), EngineError> {
    let n = models.rows();
    let evals: Vec<Result<NodeEval, LossError>> = exec.map_nodes(n, |i| {
        let sample = source.sample(i, round);
        loss_and_gradient(models.row(i), &sample, spec).map(|(loss, grad)| NodeEval { loss, grad })
    });
    let mut losses = Vec::with_capacity(n);
    let mut grads = Matrix::zeros(n, models.cols());
    for (i, e) in evals.into_iter().enumerate() {
        let e = e?;
        if !e.grad.iter().all(|g| g.is_finite()) {
            return Err(EngineError::NonFiniteGradient { node: i, round });
        }
        losses.push(e.loss);
        grads.row_mut(i).copy_from_slice(&e.grad);
    }
    Ok((losses, grads))
}

fn project(models: &mut Matrix, radius: f64) {
    for i in 0..models.rows() {
        let row = models.row_mut(i);
        let len = norm(row);
        if len > radius {
            let s = radius / len;
            row.iter_mut().for_each(|x| *x *= s);
        }
    }
}

/// Runs `cfg.rounds` rounds from all-zero models.
pub fn run_experiment<E: Executor, S: SampleSource + ?Sized>(
    cfg: &RunConfig,
    source: &S,
    exec: &E,
) -> Result<RunArtifact, EngineError> {
    let n = source.n();
    let dim = source.dim();
    let mut warnings = Vec::new();
    let rho = cfg.mixing.as_ref().map(MixingMatrix::rho);
    if cfg.algorithm == Algorithm::Dog {
        let w = cfg.mixing.as_ref().ok_or(EngineError::MissingMixing)?;
        if w.n() != n {
            return Err(EngineError::DimensionMismatch { expected: n, got: w.n() });
        }
        if w.rho() >= 1.0 - 1e-12 && n > 1 {
            warnings.push(format!("rho = {} is not below 1; local models will not reach consensus", w.rho()));
        }
    }
    let eta = resolve_learning_rate(cfg, n)?;

    let mut state = NetworkState::zeros(n, dim);
    let mut records = Vec::with_capacity(cfg.rounds);
    let mut gradient_norms = Vec::with_capacity(cfg.rounds * n);
    let mut trajectory = cfg.record_trajectory.then(|| Vec::with_capacity(cfg.rounds));
    let mut cum_loss = 0.0;

    for t in 1..=cfg.rounds as u64 {
        let (losses, grads) = evaluate(exec, source, &state.models, &cfg.loss, t)?;
        let round_sum: f64 = losses.iter().sum();
        cum_loss += round_sum;
        records.push(MetricsRecord {
            t,
            avg_loss: round_sum / n as f64,
            consensus_error: consensus_error(&state.models),
            cum_loss,
        });
        gradient_norms.extend(grads.iter_rows().map(norm));
        if let Some(traj) = trajectory.as_mut() {
            traj.push(state.models.clone());
        }

        let mut next = match cfg.algorithm {
            Algorithm::Dog => dog_round(&state, cfg.mixing.as_ref().expect("checked above"), &grads, eta)?,
            Algorithm::LocalOgd => local_ogd_round(&state, &grads, eta)?,
            Algorithm::Cog => {
                let x = cog_round(state.models.row(0), &grads, eta)?;
                let mut models = Matrix::zeros(n, dim);
                for i in 0..n {
                    models.row_mut(i).copy_from_slice(&x);
                }
                NetworkState { models, round: t + 1 }
            }
        };
        if let Some(r) = cfg.project_radius {
            project(&mut next.models, r);
        }
        if !next.models.all_finite() {
            return Err(EngineError::DivergenceDetected { round: t });
        }
        state = next;
    }

    Ok(RunArtifact {
        algorithm: cfg.algorithm,
        n,
        rounds: cfg.rounds,
        eta,
        rho,
        records,
        final_state: state,
        gradient_norms,
        trajectory,
        warnings,
    })
}

/// Gradients of every node at `state.round`, evaluated at `state.models`.
pub fn round_gradients<S: SampleSource + ?Sized>(
    source: &S,
    state: &NetworkState,
    spec: &LossSpec,
) -> Result<Matrix, EngineError> {
    evaluate(&Sequential, source, &state.models, spec, state.round).map(|(_, g)| g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixing::{build_mixing, MixingScheme};
    use crate::topology::{build_topology, TopologyKind};

    fn ring_w(n: usize) -> MixingMatrix {
        build_mixing(&build_topology(TopologyKind::Ring, n, 0).unwrap(), MixingScheme::MaxDegree)
    }

    fn state(rows: &[&[f64]]) -> NetworkState {
        NetworkState { models: Matrix::from_rows(rows).unwrap(), round: 1 }
    }

    #[test]
    fn identity_mixing_equals_local_step() {
        let s = state(&[&[1.0, 2.0], &[-3.0, 0.5], &[0.0, 0.0]]);
        let g = Matrix::from_rows(&[[0.1, -0.2], [0.3, 0.0], [1.0, 1.0]]).unwrap();
        let a = dog_round(&s, &MixingMatrix::identity(3), &g, 0.5).unwrap();
        let b = local_ogd_round(&s, &g, 0.5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_gradients_only_mix() {
        let s = state(&[&[3.0], &[0.0], &[0.0], &[0.0]]);
        let w = ring_w(4);
        let next = dog_round(&s, &w, &Matrix::zeros(4, 1), 0.1).unwrap();
        let expected = w.weights().matmul(&s.models).unwrap();
        assert_eq!(next.models, expected);
        assert_eq!(local_ogd_round(&s, &Matrix::zeros(4, 1), 0.1).unwrap().models, s.models);
        assert_eq!(cog_round(&[1.0, 2.0], &Matrix::zeros(4, 2), 0.3).unwrap(), [1.0, 2.0]);
    }

    #[test]
    fn single_node_is_plain_ogd() {
        let s = state(&[&[1.0, -1.0]]);
        let g = Matrix::from_rows(&[[0.5, 0.25]]).unwrap();
        let expected = [1.0 - 0.2 * 0.5, -1.0 - 0.2 * 0.25];
        assert_eq!(dog_round(&s, &MixingMatrix::identity(1), &g, 0.2).unwrap().models.row(0), expected);
        assert_eq!(local_ogd_round(&s, &g, 0.2).unwrap().models.row(0), expected);
        assert_eq!(cog_round(&[1.0, -1.0], &g, 0.2).unwrap(), expected);
    }

    #[test]
    fn cog_with_identical_losses_is_one_node_step() {
        let g = Matrix::from_rows(&[[0.5, -1.0], [0.5, -1.0], [0.5, -1.0]]).unwrap();
        let one = Matrix::from_rows(&[[0.5, -1.0]]).unwrap();
        assert_eq!(cog_round(&[2.0, 2.0], &g, 0.1).unwrap(), cog_round(&[2.0, 2.0], &one, 0.1).unwrap());
    }

    #[test]
    fn average_iterate_moves_by_mean_gradient() {
        let s = state(&[&[1.0, 0.0], &[4.0, -2.0], &[0.5, 3.0], &[-1.0, 1.0]]);
        let g = Matrix::from_rows(&[[0.1, 0.2], [-0.3, 0.0], [0.0, 1.0], [2.0, -1.0]]).unwrap();
        let next = dog_round(&s, &ring_w(4), &g, 0.25).unwrap();
        let before = s.average();
        let mean_g = g.row_mean();
        for ((a, b), gm) in next.average().iter().zip(&before).zip(&mean_g) {
            assert!((a - (b - 0.25 * gm)).abs() < 1e-12);
        }
    }

    #[test]
    fn round_errors() {
        let s = state(&[&[0.0], &[0.0]]);
        let bad = Matrix::from_rows(&[[f64::NAN], [0.0]]).unwrap();
        assert_eq!(
            dog_round(&s, &MixingMatrix::identity(2), &bad, 0.1),
            Err(EngineError::NonFiniteGradient { node: 0, round: 1 })
        );
        assert!(matches!(
            dog_round(&s, &MixingMatrix::identity(3), &Matrix::zeros(2, 1), 0.1),
            Err(EngineError::DimensionMismatch { .. })
        ));
        assert!(matches!(local_ogd_round(&s, &Matrix::zeros(2, 3), 0.1), Err(EngineError::DimensionMismatch { .. })));
    }

    #[test]
    fn auto_rate_examples() {
        let eta = auto_learning_rate(4, 100, 1.0, 0.0, 1.0, 0.0, 0.0).unwrap();
        assert!((eta - 0.1).abs() < 1e-15);
        let doubled = auto_learning_rate(4, 200, 1.0, 0.0, 1.0, 0.0, 0.0).unwrap();
        assert!((eta / doubled - core::f64::consts::SQRT_2).abs() < 1e-12);
        let near_one = auto_learning_rate(4, 100, 1.0, 0.0, 1.0, 0.0, 1.0 - 1e-12).unwrap();
        assert!(near_one < 1e-6);
        assert!(auto_learning_rate(4, 100, 1.0, 0.0, 1.0, 0.0, 1.0).is_err());
        assert!(auto_learning_rate(4, 100, 0.0, 0.0, 1.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn empty_run_and_config_errors() {
        let src = SyntheticSpec::new(3, 0.5, 2, 1).unwrap();
        let mut cfg = RunConfig {
            algorithm: Algorithm::Dog,
            rounds: 0,
            eta: LearningRate::Fixed(0.1),
            mixing: Some(ring_w(2)),
            loss: LossSpec::logistic(1e-3).unwrap(),
            project_radius: None,
            record_trajectory: false,
        };
        let art = run_experiment(&cfg, &src, &Sequential).unwrap();
        assert!(art.records.is_empty());
        assert_eq!(art.final_state, NetworkState::zeros(2, 3));

        cfg.mixing = Some(ring_w(3));
        assert!(matches!(run_experiment(&cfg, &src, &Sequential), Err(EngineError::DimensionMismatch { .. })));
        cfg.mixing = None;
        assert_eq!(run_experiment(&cfg, &src, &Sequential), Err(EngineError::MissingMixing));
        cfg.mixing = Some(ring_w(2));
        cfg.eta = LearningRate::Fixed(-1.0);
        assert_eq!(run_experiment(&cfg, &src, &Sequential), Err(EngineError::BadLearningRate(-1.0)));
    }

    #[test]
    fn divergence_names_round() {
        let src = SyntheticSpec::new(3, 0.5, 2, 1).unwrap();
        let cfg = RunConfig {
            algorithm: Algorithm::LocalOgd,
            rounds: 10,
            eta: LearningRate::Fixed(1e308),
            mixing: None,
            loss: LossSpec::logistic(1.0).unwrap(),
            project_radius: None,
            record_trajectory: false,
        };
        assert!(matches!(
            run_experiment(&cfg, &src, &Sequential),
            Err(EngineError::DivergenceDetected { .. } | EngineError::NonFiniteGradient { .. })
        ));
    }

    #[test]
    fn projection_keeps_models_in_ball() {
        let src = SyntheticSpec::new(4, 0.2, 3, 5).unwrap();
        let cfg = RunConfig {
            algorithm: Algorithm::LocalOgd,
            rounds: 50,
            eta: LearningRate::Fixed(1.0),
            mixing: None,
            loss: LossSpec::logistic(0.0).unwrap(),
            project_radius: Some(0.5),
            record_trajectory: true,
        };
        let art = run_experiment(&cfg, &src, &Sequential).unwrap();
        for m in art.trajectory.unwrap() {
            assert!(m.iter_rows().all(|r| norm(r) <= 0.5 + 1e-12));
        }
    }
}
