//! Experiment files.
//!
//! ```toml
//! [network]
//! topology = "watts_strogatz"   # ring | complete | disconnected | random_k | watts_strogatz
//! n = 50
//! k = 4                         # random_k and watts_strogatz
//! p = 0.5                       # watts_strogatz
//! scheme = "max_degree"         # uniform | max_degree
//!
//! [algorithm]
//! kind = "dog"                  # dog | cog | local_ogd
//! eta = 0.05                    # or "auto" (needs [bounds])
//! T = 2000
//! seed = 42
//! project_radius = 10.0         # optional
//!
//! [loss]
//! gamma = 0.001
//!
//! [data]                        # synthetic stream ...
//! beta = 0.5
//! dim = 10
//! # ... or a LIBSVM file:
//! # path = "susy.libsvm"
//! # stochastic_fraction = 0.8
//!
//! [bounds]                      # optional
//! G = 1.0
//! sigma = 1.0
//! R = 1.0
//! M = 0.0
//! ```
//!
//! Unknown keys are rejected. Omitted optional keys take the desk-scale
//! defaults below. A `[resolved]` section, written by `run` into
//! `resolved.cfg`, is informational and ignored when read back.

use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DEFAULT_NODES: usize = 50;
pub const DEFAULT_ROUNDS: usize = 2000;
pub const DEFAULT_DIM: usize = 10;
pub const DEFAULT_GAMMA: f64 = 1e-3;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub network: NetworkSection,
    pub algorithm: AlgorithmSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossSection>,
    pub data: DataSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolved: Option<ResolvedSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyName {
    Ring,
    Complete,
    Disconnected,
    RandomK,
    WattsStrogatz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    Uniform,
    MaxDegree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmName {
    Dog,
    Cog,
    LocalOgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub topology: TopologyName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<SchemeName>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EtaSetting {
    Value(f64),
    Keyword(AutoKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoKeyword {
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSection {
    pub kind: AlgorithmName,
    pub eta: EtaSetting,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub project_radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stochastic_fraction: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    #[serde(rename = "G")]
    pub g: f64,
    pub sigma: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "M")]
    pub m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

/// Where the samples come from, after validation.
#[derive(Debug, Clone, PartialEq)]
pub enum DataChoice {
    Synthetic { beta: f64, dim: usize },
    File { path: String, stochastic_fraction: f64 },
}

impl ExperimentFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let file: ExperimentFile = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        file.data_choice()?;
        file.topology_params()?;
        if matches!(file.algorithm.eta, EtaSetting::Keyword(AutoKeyword::Auto)) && file.bounds.is_none() {
            return Err(CliError::Config("eta = \"auto\" needs a [bounds] section with G, sigma, R and M".into()));
        }
        Ok(file)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain data serializes")
    }

    pub fn nodes(&self) -> usize {
        self.network.n.unwrap_or(DEFAULT_NODES)
    }

    pub fn rounds(&self) -> usize {
        self.algorithm.rounds.unwrap_or(DEFAULT_ROUNDS)
    }

    pub fn seed(&self) -> u64 {
        self.algorithm.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn gamma(&self) -> f64 {
        self.loss.as_ref().map_or(DEFAULT_GAMMA, |l| l.gamma)
    }

    pub fn scheme(&self) -> SchemeName {
        self.network.scheme.unwrap_or(SchemeName::MaxDegree)
    }

    /// `(k, p)` for the topologies that use them.
    pub fn topology_params(&self) -> Result<(Option<usize>, Option<f64>), CliError> {
        let net = &self.network;
        match net.topology {
            TopologyName::RandomK => {
                let k = net.k.ok_or_else(|| CliError::Config("topology random_k needs k".into()))?;
                Ok((Some(k), None))
            }
            TopologyName::WattsStrogatz => {
                let k = net.k.ok_or_else(|| CliError::Config("topology watts_strogatz needs k".into()))?;
                let p = net.p.ok_or_else(|| CliError::Config("topology watts_strogatz needs p".into()))?;
                Ok((Some(k), Some(p)))
            }
            _ => Ok((None, None)),
        }
    }

    pub fn data_choice(&self) -> Result<DataChoice, CliError> {
        let d = &self.data;
        match &d.path {
            Some(path) => {
                if d.beta.is_some() || d.dim.is_some() {
                    return Err(CliError::Config("[data] with a path takes no beta or dim".into()));
                }
                let stochastic_fraction = d
                    .stochastic_fraction
                    .ok_or_else(|| CliError::Config("[data] with a path needs stochastic_fraction".into()))?;
                Ok(DataChoice::File { path: path.clone(), stochastic_fraction })
            }
            None => {
                if d.stochastic_fraction.is_some() {
                    return Err(CliError::Config("stochastic_fraction only applies to file data".into()));
                }
                let beta =
                    d.beta.ok_or_else(|| CliError::Config("[data] needs beta (synthetic) or path (file)".into()))?;
                Ok(DataChoice::Synthetic { beta, dim: d.dim.unwrap_or(DEFAULT_DIM) })
            }
        }
    }

    /// Copy with every default written out and a numeric learning rate.
    pub fn resolved(&self, eta: f64, rho: Option<f64>) -> Self {
        let mut out = self.clone();
        out.network.n = Some(self.nodes());
        out.network.scheme = Some(self.scheme());
        out.algorithm.eta = EtaSetting::Value(eta);
        out.algorithm.rounds = Some(self.rounds());
        out.algorithm.seed = Some(self.seed());
        out.loss = Some(LossSection { gamma: self.gamma() });
        if out.data.path.is_none() {
            out.data.dim = Some(out.data.dim.unwrap_or(DEFAULT_DIM));
        }
        out.resolved = Some(ResolvedSection { rho, eta: Some(eta) });
        out
    }
}
