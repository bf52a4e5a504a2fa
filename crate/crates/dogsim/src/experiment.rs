//! Turns an [`ExperimentFile`] into a runnable configuration.

use std::path::Path;

use dogsim_core::engine::{
    run_experiment, Algorithm, AssumptionConstants, EngineError, Executor, LearningRate, RunArtifact, RunConfig,
    SampleSource,
};
use dogsim_core::ingest::{normalize, parse_libsvm, split_stoch_adv, NodeStreams};
use dogsim_core::losses::{LabeledSample, LossSpec};
use dogsim_core::mixing::{build_mixing, MixingMatrix, MixingScheme};
use dogsim_core::topology::{build_topology, is_connected, Graph, TopologyKind};
use dogsim_core::SyntheticSpec;

use crate::config::{AlgorithmName, DataChoice, EtaSetting, ExperimentFile, SchemeName, TopologyName};
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Streams(NodeStreams),
}

impl SampleSource for DataSource {
    fn n(&self) -> usize {
        match self {
            DataSource::Synthetic(s) => s.n,
            DataSource::Streams(s) => s.n(),
        }
    }

    fn dim(&self) -> usize {
        match self {
            DataSource::Synthetic(s) => s.dim,
            DataSource::Streams(s) => s.dim,
        }
    }

    fn sample(&self, node: usize, round: u64) -> LabeledSample {
        match self {
            DataSource::Synthetic(s) => s.sample(node, round),
            DataSource::Streams(s) => s.sample(node, round).clone(),
        }
    }
}

/// Everything a run needs, built from a config.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub graph: Graph,
    pub mixing: MixingMatrix,
    pub source: DataSource,
    pub run: RunConfig,
    pub bounds: Option<AssumptionConstants>,
    pub warnings: Vec<String>,
}

pub fn topology_kind(file: &ExperimentFile) -> Result<TopologyKind, CliError> {
    let (k, p) = file.topology_params()?;
    Ok(match file.network.topology {
        TopologyName::Ring => TopologyKind::Ring,
        TopologyName::Complete => TopologyKind::Complete,
        TopologyName::Disconnected => TopologyKind::Disconnected,
        TopologyName::RandomK => TopologyKind::RandomK(k.expect("validated")),
        TopologyName::WattsStrogatz => {
            TopologyKind::WattsStrogatz { k: k.expect("validated"), p: p.expect("validated") }
        }
    })
}

pub fn algorithm(name: AlgorithmName) -> Algorithm {
    match name {
        AlgorithmName::Dog => Algorithm::Dog,
        AlgorithmName::Cog => Algorithm::Cog,
        AlgorithmName::LocalOgd => Algorithm::LocalOgd,
    }
}

/// Graph and mixing matrix of the configured network.
pub fn network(file: &ExperimentFile) -> Result<(Graph, MixingMatrix), CliError> {
    let graph =
        build_topology(topology_kind(file)?, file.nodes(), file.seed()).map_err(|e| CliError::Config(e.to_string()))?;
    let scheme = match file.scheme() {
        SchemeName::Uniform => MixingScheme::Uniform,
        SchemeName::MaxDegree => MixingScheme::MaxDegree,
    };
    let mixing = build_mixing(&graph, scheme);
    Ok((graph, mixing))
}

/// Loads the configured sample source; relative paths resolve against `base_dir`.
pub fn data_source(file: &ExperimentFile, base_dir: &Path) -> Result<DataSource, CliError> {
    let n = file.nodes();
    match file.data_choice()? {
        DataChoice::Synthetic { beta, dim } => SyntheticSpec::new(dim, beta, n, file.seed())
            .map(DataSource::Synthetic)
            .map_err(|e| CliError::Config(e.to_string())),
        DataChoice::File { path, stochastic_fraction } => {
            let full = base_dir.join(&path);
            let text = std::fs::read_to_string(&full).map_err(|e| CliError::io(&full, e))?;
            let parsed = parse_libsvm(&text).map_err(|e| CliError::Config(format!("{path}: {e}")))?;
            let data = normalize(&parsed).map_err(|e| CliError::Config(format!("{path}: {e}")))?;
            split_stoch_adv(&data, stochastic_fraction, n, file.rounds(), file.seed())
                .map(DataSource::Streams)
                .map_err(|e| CliError::Config(format!("{path}: {e}")))
        }
    }
}

pub fn prepare(file: &ExperimentFile, base_dir: &Path) -> Result<Prepared, CliError> {
    let (graph, mixing) = network(file)?;
    let source = data_source(file, base_dir)?;
    let algorithm = algorithm(file.algorithm.kind);
    let bounds = file.bounds.map(|b| AssumptionConstants { g: b.g, sigma: b.sigma, r: b.r, m: b.m });
    let eta = match file.algorithm.eta {
        EtaSetting::Value(v) => LearningRate::Fixed(v),
        EtaSetting::Keyword(_) => LearningRate::Auto(
            bounds.ok_or_else(|| CliError::Config("eta = \"auto\" needs a [bounds] section".into()))?,
        ),
    };
    let loss = LossSpec::logistic(file.gamma()).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(r) = file.algorithm.project_radius {
        if r.is_nan() || r <= 0.0 {
            return Err(CliError::Config(format!("project_radius must be positive, got {r}")));
        }
    }
    let mut warnings = Vec::new();
    if algorithm == Algorithm::Dog && !is_connected(&graph) {
        warnings.push("communication graph is not connected".to_string());
    }
    let run = RunConfig {
        algorithm,
        rounds: file.rounds(),
        eta,
        mixing: (algorithm == Algorithm::Dog).then(|| mixing.clone()),
        loss,
        project_radius: file.algorithm.project_radius,
        record_trajectory: false,
    };
    Ok(Prepared { graph, mixing, source, run, bounds, warnings })
}

pub fn execute<E: Executor>(prepared: &Prepared, exec: &E) -> Result<RunArtifact, CliError> {
    run_experiment(&prepared.run, &prepared.source, exec).map_err(engine_error)
}

/// Numerical blow-ups are runtime failures; everything else is a bad config.
pub fn engine_error(e: EngineError) -> CliError {
    match e {
        EngineError::DivergenceDetected { .. } | EngineError::NonFiniteGradient { .. } => {
            CliError::Runtime(e.to_string())
        }
        other => CliError::Config(other.to_string()),
    }
}
