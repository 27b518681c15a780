//! Single-run experiment configuration, stored as TOML.

use std::path::Path;

use oligopoly::learn::PpoConfig;
use oligopoly::{Algorithm, MarketConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{ExpError, Result};

/// Training settings that differ from the per-algorithm defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectories_per_iteration: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_decay_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_decay_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_layers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_units: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ppo: Option<PpoConfig>,
}

impl TrainOverrides {
    /// Desk-scale budget: 200 iterations of 2000 trajectories.
    pub fn desk() -> Self {
        Self { iterations: Some(200), trajectories_per_iteration: Some(2000), ..Self::default() }
    }

    /// Defaults of `algo` with these overrides applied. A changed budget keeps
    /// four learning-rate phases unless `lr_decay_every` is given.
    pub fn resolve(&self, algo: Algorithm, seed: u64) -> TrainConfig {
        let mut tc = TrainConfig::for_algorithm(algo).with_seed(seed);
        if self.iterations.is_some() || self.trajectories_per_iteration.is_some() {
            let iterations = self.iterations.unwrap_or(tc.iterations);
            let trajectories = self.trajectories_per_iteration.unwrap_or(tc.trajectories_per_iteration);
            tc = tc.with_budget(iterations, trajectories);
        }
        if let Some(v) = self.learning_rate {
            tc.learning_rate = v;
        }
        if let Some(v) = self.lr_decay_factor {
            tc.lr_decay_factor = v;
        }
        if let Some(v) = self.lr_decay_every {
            tc.lr_decay_every = v;
        }
        if let Some(v) = self.hidden_layers {
            tc.hidden_layers = v;
        }
        if let Some(v) = self.hidden_units {
            tc.hidden_units = v;
        }
        if let Some(p) = &self.ppo {
            tc.ppo = p.clone();
        }
        tc
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySettings {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_threshold")]
    pub denominator_threshold: f64,
}

fn default_k() -> usize {
    32
}

fn default_threshold() -> f64 {
    0.01
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self { k: default_k(), denominator_threshold: default_threshold() }
    }
}

/// A market plus the settings for training and verifying on it.
///
/// ```toml
/// [market]
/// n_agents = 3
/// horizon = 4
/// initial_demands = [1.0, 1.0, 1.0]
/// unit_costs = [0.8, 0.8, 0.8]
/// dropouts = false
/// information = "partial"
///
/// [train]
/// iterations = 200
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub market: MarketConfig<f64>,
    #[serde(default)]
    pub train: TrainOverrides,
    #[serde(default)]
    pub verify: VerifySettings,
}

impl ExperimentConfig {
    pub fn new(market: MarketConfig<f64>) -> Self {
        Self { market, train: TrainOverrides::default(), verify: VerifySettings::default() }
    }

    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)
            .map_err(|e| ExpError::Parse { path: origin.to_string(), message: one_line(&e.to_string()) })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::error::read_input(path)?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string())?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.market.validate()?;
        if self.verify.k < 2 {
            return Err(ExpError::InvalidConfig("verify.k must be at least 2".into()));
        }
        self.train.resolve(Algorithm::Ppo, 0).validate()?;
        Ok(())
    }
}

pub(crate) fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
