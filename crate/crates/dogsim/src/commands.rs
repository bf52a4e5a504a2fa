//! The four subcommands. Each returns `Ok` on success or a [`CliError`]
//! carrying its exit code; diagnostics are returned, not printed, so the
//! binary decides where they go.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use dogsim_core::engine::{Algorithm, RunArtifact, SampleSource};
use dogsim_core::fmt::g17;
use dogsim_core::ingest::libsvm_line;
use dogsim_core::losses::smoothness_bound;
use dogsim_core::metrics::{
    average_loss, consensus_error, estimate_assumption_constants, offline_comparator, run_samples, run_static_regret,
    theorem1_bound, BoundParams, EmpiricalLoss,
};
use dogsim_core::mixing::verify_doubly_stochastic;
use rayon::prelude::*;

use crate::config::{AlgorithmName, ExperimentFile, TopologyName};
use crate::error::CliError;
use crate::executor::PoolExecutor;
use crate::experiment::{execute, network, prepare, Prepared};
use crate::formats::{matrix_csv, metrics_csv};

/// Reads and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentFile, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    ExperimentFile::parse(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn base_dir(config_path: &Path) -> PathBuf {
    config_path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// What a finished run reports besides its metrics.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub artifact: RunArtifact,
    pub warnings: Vec<String>,
}

/// Runs one experiment and writes `metrics.csv`, `resolved.cfg` and
/// `summary.txt` into `out_dir`.
pub fn cmd_run(config_path: &Path, out_dir: &Path, threads: usize) -> Result<RunOutcome, CliError> {
    let file = load_config(config_path)?;
    let prepared = prepare(&file, &base_dir(config_path))?;
    let exec = PoolExecutor::new(threads)?;
    let artifact = execute(&prepared, &exec)?;
    let mut warnings = prepared.warnings.clone();
    warnings.extend(artifact.warnings.iter().cloned());

    create_dir(out_dir)?;
    write(&out_dir.join("metrics.csv"), &metrics_csv(&artifact.records))?;
    let resolved = file.resolved(artifact.eta, artifact.rho);
    write(&out_dir.join("resolved.cfg"), &resolved.to_toml())?;
    write(&out_dir.join("summary.txt"), &summary(&prepared, &artifact))?;
    Ok(RunOutcome { artifact, warnings })
}

/// `key=value` lines describing a finished run.
pub fn summary(prepared: &Prepared, artifact: &RunArtifact) -> String {
    let mut out = String::new();
    let mut line = |k: &str, v: String| {
        let _ = writeln!(out, "{k}={v}");
    };
    line("algorithm", artifact.algorithm.name().to_string());
    line("n", artifact.n.to_string());
    line("T", artifact.rounds.to_string());
    line("eta", g17(artifact.eta));
    line("rho", g17(prepared.mixing.rho()));
    if artifact.records.is_empty() {
        line("average_loss", "n/a (no rounds)".into());
        return out;
    }
    line("average_loss", g17(average_loss(&artifact.records).expect("non-empty")));
    line("final_consensus_error", g17(consensus_error(&artifact.final_state.models)));

    let samples = run_samples(&prepared.source, artifact.rounds);
    let spec = prepared.run.loss;
    let lipschitz = smoothness_bound(&samples, &spec).expect("non-empty");
    let regret = EmpiricalLoss::new(&samples, spec)
        .map_err(|e| e.to_string())
        .and_then(|obj| offline_comparator(&obj).map_err(|e| e.to_string()))
        .and_then(|x| run_static_regret(artifact, &prepared.source, &spec, &x).map_err(|e| e.to_string()));
    line("static_regret", regret.map(g17).unwrap_or_else(|e| format!("n/a ({e})")));

    let est = estimate_assumption_constants(artifact).expect("non-empty");
    line("G_hat", g17(est.g_hat));
    line("sigma_hat", g17(est.sigma_hat));
    line("L", g17(lipschitz));

    let rho = match artifact.algorithm {
        Algorithm::Dog => prepared.mixing.rho(),
        Algorithm::Cog => 0.0,
        Algorithm::LocalOgd if artifact.n > 1 => 1.0,
        Algorithm::LocalOgd => 0.0,
    };
    let bound = match prepared.bounds {
        Some(b) => theorem1_bound(&BoundParams {
            n: artifact.n as f64,
            t: artifact.rounds as f64,
            eta: artifact.eta,
            g: b.g,
            sigma: b.sigma,
            l: lipschitz,
            rho,
            r: b.r,
            m: b.m,
        })
        .map(g17)
        .unwrap_or_else(|e| format!("n/a ({e})")),
        None => "n/a (no [bounds] given)".to_string(),
    };
    line("theorem1_bound", bound);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Beta,
    Nodes,
    Topology,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Beta => "beta",
            SweepAxis::Nodes => "nodes",
            SweepAxis::Topology => "topology",
        }
    }
}

/// One sweep cell: the value label, the algorithm, and its config.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub value: String,
    pub algorithm: AlgorithmName,
    pub file: ExperimentFile,
}

impl SweepCell {
    fn dir_name(&self) -> String {
        self.value.replace([':', '/'], "_")
    }
}

/// Expands a base config along an axis. `beta` runs DOG and Local OGD per
/// value, `topology` runs DOG per topology, `nodes` keeps the configured
/// algorithm. Topology values are `ring`, `complete`, `disconnected`,
/// `random_k:<k>` and `watts_strogatz:<p>` (lattice degree from `k`, default 4).
pub fn sweep_cells(base: &ExperimentFile, axis: SweepAxis, values: &[String]) -> Result<Vec<SweepCell>, CliError> {
    if values.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }
    let mut cells = Vec::new();
    for value in values {
        let bad = |why: &str| CliError::Config(format!("sweep value {value:?}: {why}"));
        let mut file = base.clone();
        file.resolved = None;
        match axis {
            SweepAxis::Beta => {
                if file.data.path.is_some() {
                    return Err(bad("beta sweeps need synthetic data"));
                }
                file.data.beta = Some(value.parse().map_err(|_| bad("not a number"))?);
                for algorithm in [AlgorithmName::Dog, AlgorithmName::LocalOgd] {
                    let mut f = file.clone();
                    f.algorithm.kind = algorithm;
                    cells.push(SweepCell { value: value.clone(), algorithm, file: f });
                }
            }
            SweepAxis::Nodes => {
                file.network.n = Some(value.parse().map_err(|_| bad("not a node count"))?);
                let algorithm = file.algorithm.kind;
                cells.push(SweepCell { value: value.clone(), algorithm, file });
            }
            SweepAxis::Topology => {
                let (name, arg) = match value.split_once(':') {
                    Some((n, a)) => (n, Some(a)),
                    None => (value.as_str(), None),
                };
                let net = &mut file.network;
                match (name, arg) {
                    ("ring", None) => net.topology = TopologyName::Ring,
                    ("complete", None) => net.topology = TopologyName::Complete,
                    ("disconnected", None) => net.topology = TopologyName::Disconnected,
                    ("random_k", Some(k)) => {
                        net.topology = TopologyName::RandomK;
                        net.k = Some(k.parse().map_err(|_| bad("bad k"))?);
                    }
                    ("watts_strogatz", Some(p)) => {
                        net.topology = TopologyName::WattsStrogatz;
                        net.p = Some(p.parse().map_err(|_| bad("bad p"))?);
                        net.k = Some(net.k.unwrap_or(4));
                    }
                    _ => return Err(bad("unknown topology")),
                }
                file.algorithm.kind = AlgorithmName::Dog;
                cells.push(SweepCell { value: value.clone(), algorithm: AlgorithmName::Dog, file });
            }
        }
    }
    Ok(cells)
}

/// Result row of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub algorithm: &'static str,
    pub average_loss: f64,
}

/// Runs every cell (in parallel) and writes `<out>/<value>/<algorithm>/metrics.csv`
/// plus `<out>/sweep_summary.csv`.
pub fn cmd_sweep(
    config_path: &Path,
    axis: SweepAxis,
    values: &[String],
    out_dir: &Path,
    threads: usize,
) -> Result<Vec<SweepRow>, CliError> {
    let base = load_config(config_path)?;
    let cells = sweep_cells(&base, axis, values)?;
    let dir = base_dir(config_path);
    create_dir(out_dir)?;
    let exec = PoolExecutor::new(threads)?;
    let rows: Vec<Result<SweepRow, CliError>> = exec.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let label = format!("cell {}={} ({})", axis.name(), cell.value, algorithm_label(cell.algorithm));
                run_cell(cell, &dir, out_dir).map_err(|e| e.within(&label))
            })
            .collect()
    });
    let rows: Vec<SweepRow> = rows.into_iter().collect::<Result<_, _>>()?;
    let mut csv = String::from("value,algorithm,average_loss\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{},{}", r.value, r.algorithm, g17(r.average_loss));
    }
    write(&out_dir.join("sweep_summary.csv"), &csv)?;
    Ok(rows)
}

fn algorithm_label(a: AlgorithmName) -> &'static str {
    crate::experiment::algorithm(a).name()
}

fn run_cell(cell: &SweepCell, base_dir: &Path, out_dir: &Path) -> Result<SweepRow, CliError> {
    let prepared = prepare(&cell.file, base_dir)?;
    let artifact = execute(&prepared, &dogsim_core::engine::Sequential)?;
    let avg = average_loss(&artifact.records).map_err(|e| CliError::Config(e.to_string()))?;
    let cell_dir = out_dir.join(cell.dir_name()).join(algorithm_label(cell.algorithm));
    create_dir(&cell_dir)?;
    write(&cell_dir.join("metrics.csv"), &metrics_csv(&artifact.records))?;
    Ok(SweepRow { value: cell.value.clone(), algorithm: algorithm_label(cell.algorithm), average_loss: avg })
}

/// Text report of the configured mixing matrix, plus warnings.
pub fn cmd_matrix(config_path: &Path) -> Result<(String, Vec<String>), CliError> {
    let file = load_config(config_path)?;
    let (_, w) = network(&file)?;
    let report = verify_doubly_stochastic(w.weights(), 1e-9).expect("square");
    let mut out = matrix_csv(w.weights());
    let _ = writeln!(out, "rho={}", g17(w.rho()));
    let _ = writeln!(out, "max_row_dev={}", g17(report.max_row_dev));
    let _ = writeln!(out, "max_col_dev={}", g17(report.max_col_dev));
    let mut warnings = Vec::new();
    if w.rho() >= 1.0 - 1e-12 && w.n() > 1 {
        warnings.push(format!("rho={} is not below 1; models on this network cannot reach consensus", g17(w.rho())));
    }
    Ok((out, warnings))
}

/// Writes the first `count` samples of every node as LIBSVM lines, node by node.
pub fn cmd_data(config_path: &Path, count: usize, output: &Path) -> Result<usize, CliError> {
    let file = load_config(config_path)?;
    let source = crate::experiment::data_source(&file, &base_dir(config_path))?;
    let mut text = String::new();
    let mut lines = 0;
    for node in 0..source.n() {
        for t in 1..=count as u64 {
            text.push_str(&libsvm_line(&source.sample(node, t)));
            text.push('\n');
            lines += 1;
        }
    }
    write(output, &text)?;
    Ok(lines)
}
