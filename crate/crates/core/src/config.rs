//! Problem configuration files consumed by the command-line tools.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::abc::{AbcProblem, Prior, TargetFn};
use crate::error::Result;
use crate::io::observations_from_csv;
use crate::network::ReactionNetwork;
use crate::sim::{CostModel, ObservationModel};

/// Observation process named by species rather than index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservationConfig {
    pub species: Vec<String>,
    pub sigma: f64,
    pub times: Vec<f64>,
}

impl ObservationConfig {
    pub fn resolve(&self, network: &ReactionNetwork) -> Result<ObservationModel> {
        let observed = self
            .species
            .iter()
            .map(|name| network.species_index(name))
            .collect::<Result<Vec<_>>>()?;
        let model = ObservationModel { observed, sigma: self.sigma, times: self.times.clone() };
        model.validate(network.species_count())?;
        Ok(model)
    }

    pub fn from_model(obs: &ObservationModel, network: &ReactionNetwork) -> Self {
        ObservationConfig {
            species: obs.observed.iter().map(|&i| network.species[i].clone()).collect(),
            sigma: obs.sigma,
            times: obs.times.clone(),
        }
    }
}

/// An inference problem on disk: model and data file references are
/// resolved relative to the config file's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub model: String,
    pub data: String,
    pub observation: ObservationConfig,
    pub prior: Vec<(f64, f64)>,
    pub epsilon: f64,
    pub f: TargetFn,
    pub seed: u64,
    pub n: usize,
    #[serde(default)]
    pub cost: CostModel,
}

impl ProblemConfig {
    pub fn load(path: &Path) -> Result<(Self, AbcProblem)> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ProblemConfig = serde_json::from_str(&text)?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let network = ReactionNetwork::load(&dir.join(&cfg.model))?;
        let obs_model = cfg.observation.resolve(&network)?;
        let data_text = std::fs::read_to_string(dir.join(&cfg.data))?;
        let data = observations_from_csv(&data_text, &obs_model)?;
        let prior = Prior::new(cfg.prior.clone())?;
        let problem = AbcProblem::new(network, obs_model, data, prior, cfg.epsilon)?
            .with_cost_model(cfg.cost);
        Ok((cfg, problem))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, text)?;
        Ok(())
    }
}

impl std::fmt::Display for ProblemConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} @ eps={} n={}", self.model, self.epsilon, self.n)
    }
}

impl TargetFn {
    /// Stable label for file outputs.
    pub fn label(&self) -> String {
        match self {
            TargetFn::Mean { dim } => format!("mean_theta{dim}"),
            TargetFn::Indicator { dim, threshold } => format!("cdf_theta{dim}_at_{threshold}"),
        }
    }
}
