//! Whole-run invariants of the round loop.

use dogsim_core::engine::{
    round_gradients, run_experiment, Algorithm, LearningRate, RunArtifact, RunConfig, SampleSource, Sequential,
};
use dogsim_core::losses::{LabeledSample, LossSpec};
use dogsim_core::metrics::{consensus_bound, estimate_assumption_constants};
use dogsim_core::mixing::{build_mixing, MixingMatrix, MixingScheme};
use dogsim_core::topology::{build_topology, TopologyKind};
use dogsim_core::{NetworkState, SyntheticSpec};

fn config(algorithm: Algorithm, mixing: Option<MixingMatrix>, rounds: usize, eta: f64) -> RunConfig {
    RunConfig {
        algorithm,
        rounds,
        eta: LearningRate::Fixed(eta),
        mixing,
        loss: LossSpec::logistic(1e-3).unwrap(),
        project_radius: None,
        record_trajectory: true,
    }
}

fn mixing(kind: TopologyKind, n: usize, scheme: MixingScheme) -> MixingMatrix {
    build_mixing(&build_topology(kind, n, 1).unwrap(), scheme)
}

fn run(cfg: &RunConfig, src: &SyntheticSpec) -> RunArtifact {
    run_experiment(cfg, src, &Sequential).unwrap()
}

#[test]
fn average_iterate_follows_mean_gradient() {
    let src = SyntheticSpec::new(10, 0.5, 12, 7).unwrap();
    let w = mixing(TopologyKind::WattsStrogatz { k: 4, p: 0.5 }, 12, MixingScheme::MaxDegree);
    let cfg = config(Algorithm::Dog, Some(w), 300, 0.2);
    let art = run(&cfg, &src);
    let traj = art.trajectory.as_ref().unwrap();
    for t in 0..traj.len() - 1 {
        let state = NetworkState { models: traj[t].clone(), round: t as u64 + 1 };
        let g = round_gradients(&src, &state, &cfg.loss).unwrap().row_mean();
        let before = traj[t].row_mean();
        let after = traj[t + 1].row_mean();
        let scale = 1.0 + before.iter().map(|v| v * v).sum::<f64>().sqrt();
        let dev: f64 =
            after.iter().zip(&before).zip(&g).map(|((a, b), gm)| (a - (b - 0.2 * gm)).powi(2)).sum::<f64>().sqrt();
        assert!(dev <= 1e-9 * scale, "round {}: {dev}", t + 1);
    }
}

#[test]
fn identity_mixing_reproduces_local_ogd() {
    let src = SyntheticSpec::new(5, 0.3, 6, 2).unwrap();
    let dog = run(&config(Algorithm::Dog, Some(MixingMatrix::identity(6)), 200, 0.1), &src);
    let local = run(&config(Algorithm::LocalOgd, None, 200, 0.1), &src);
    assert_eq!(dog.trajectory, local.trajectory);
    assert_eq!(dog.records, local.records);
}

#[test]
fn single_node_algorithms_coincide() {
    let src = SyntheticSpec::new(4, 0.6, 1, 3).unwrap();
    let dog = run(&config(Algorithm::Dog, Some(MixingMatrix::identity(1)), 150, 0.3), &src);
    let cog = run(&config(Algorithm::Cog, None, 150, 0.3), &src);
    let local = run(&config(Algorithm::LocalOgd, None, 150, 0.3), &src);
    assert_eq!(dog.trajectory, cog.trajectory);
    assert_eq!(dog.trajectory, local.trajectory);
    assert_eq!(dog.records, cog.records);
}

/// Every node sees the same sample.
struct Shared(SyntheticSpec);

impl SampleSource for Shared {
    fn n(&self) -> usize {
        self.0.n
    }
    fn dim(&self) -> usize {
        self.0.dim
    }
    fn sample(&self, _node: usize, round: u64) -> LabeledSample {
        self.0.sample(0, round)
    }
}

#[test]
fn complete_graph_reaches_consensus_after_one_round_of_equal_gradients() {
    let src = Shared(SyntheticSpec::new(10, 0.5, 3, 4).unwrap());
    let w = mixing(TopologyKind::Complete, 3, MixingScheme::Uniform);
    let art = run_experiment(&config(Algorithm::Dog, Some(w), 100, 0.1), &src, &Sequential).unwrap();
    assert_eq!(art.records[0].consensus_error, 0.0);
    assert!(art.records[1].consensus_error < 1e-30);

    // with distinct data the complete graph still averages away all history
    let distinct = SyntheticSpec::new(10, 0.5, 3, 4).unwrap();
    let w = mixing(TopologyKind::Complete, 3, MixingScheme::Uniform);
    let art = run(&config(Algorithm::Dog, Some(w), 5, 0.1), &distinct);
    assert!(art.records[1].consensus_error > 0.0);
}

#[test]
fn runs_are_deterministic() {
    let src = SyntheticSpec::new(10, 0.5, 8, 11).unwrap();
    let w = mixing(TopologyKind::RandomK(2), 8, MixingScheme::MaxDegree);
    let cfg = config(Algorithm::Dog, Some(w), 100, 0.1);
    assert_eq!(run(&cfg, &src), run(&cfg, &src));
}

#[test]
fn consensus_error_stays_under_bound() {
    let cases = [
        (TopologyKind::Ring, 8, MixingScheme::MaxDegree),
        (TopologyKind::Complete, 6, MixingScheme::Uniform),
        (TopologyKind::RandomK(3), 10, MixingScheme::MaxDegree),
        (TopologyKind::WattsStrogatz { k: 4, p: 1.0 }, 12, MixingScheme::MaxDegree),
    ];
    for (kind, n, scheme) in cases {
        let w = mixing(kind, n, scheme);
        assert!(w.rho() <= 0.9, "{kind:?}: rho {}", w.rho());
        for beta in [0.1, 0.5, 0.9] {
            let src = SyntheticSpec::new(10, beta, n, 5).unwrap();
            let art = run(&config(Algorithm::Dog, Some(w.clone()), 400, 0.05), &src);
            let c = estimate_assumption_constants(&art).unwrap();
            let total: f64 = art.records.iter().map(|r| n as f64 * r.consensus_error).sum();
            let bound = consensus_bound(n as f64, 400.0, 0.05, c.g_hat, c.sigma_hat, w.rho()).unwrap();
            assert!(total <= bound, "{kind:?} beta {beta}: {total} > {bound}");
        }
    }
}
