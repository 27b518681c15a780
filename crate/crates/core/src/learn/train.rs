//! Simultaneous self-play training and learned profiles.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::collect;
use super::beta::{to_price, BetaHead};
use super::features::{feature_dim, write_features, write_stage_feature};
use super::nn::{Adam, Mlp};
use super::ppo::{ppo_update, PpoConfig, PpoState};
use super::reinforce::reinforce_update;
use crate::error::{Error, Result};
use crate::market::{Information, MarketConfig, Observation, Policy, StrategyProfile};
use crate::policy::OpenLoopPolicy;
use crate::scalar::Scalar;
use crate::seed::mix_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Ppo,
    Reinforce,
}

impl Algorithm {
    pub const ALL: [Algorithm; 2] = [Algorithm::Ppo, Algorithm::Reinforce];

    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Ppo => "ppo",
            Algorithm::Reinforce => "reinforce",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ppo" => Ok(Algorithm::Ppo),
            "reinforce" => Ok(Algorithm::Reinforce),
            other => Err(Error::InvalidConfig(format!("unknown algorithm '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub trajectories_per_iteration: usize,
    pub learning_rate: f64,
    /// The learning rate is divided by this factor every `lr_decay_every`
    /// iterations.
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
    pub seed: u64,
    pub hidden_layers: usize,
    pub hidden_units: usize,
    pub ppo: PpoConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::for_algorithm(Algorithm::Ppo)
    }
}

impl TrainConfig {
    pub fn for_algorithm(algo: Algorithm) -> Self {
        let (learning_rate, lr_decay_factor) = match algo {
            Algorithm::Ppo => (8.57e-4, 8.0),
            Algorithm::Reinforce => (2.864e-4, 2.0),
        };
        Self {
            iterations: 1000,
            trajectories_per_iteration: 20_000,
            learning_rate,
            lr_decay_factor,
            lr_decay_every: 250,
            seed: 0,
            hidden_layers: 3,
            hidden_units: 64,
            ppo: PpoConfig::default(),
        }
    }

    /// Changes the budget and keeps four equally long learning-rate phases.
    pub fn with_budget(mut self, iterations: usize, trajectories: usize) -> Self {
        self.iterations = iterations;
        self.trajectories_per_iteration = trajectories;
        self.lr_decay_every = (iterations / 4).max(1);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn learning_rate_at(&self, iteration: usize) -> f64 {
        let phase = (iteration / self.lr_decay_every) as i32;
        self.learning_rate / self.lr_decay_factor.powi(phase)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.iterations == 0 || self.trajectories_per_iteration == 0 {
            return bad("iterations and trajectories_per_iteration must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.lr_decay_factor > 0.0) || self.lr_decay_every == 0 {
            return bad("learning-rate schedule must be positive");
        }
        if self.hidden_units == 0 {
            return bad("hidden_units must be positive");
        }
        if self.ppo.epochs == 0 || self.ppo.minibatch == 0 || !(self.ppo.clip > 0.0) {
            return bad("ppo epochs, minibatch and clip must be positive");
        }
        Ok(())
    }

    fn layer_sizes(&self, input: usize, output: usize) -> Vec<usize> {
        let mut sizes = vec![input];
        sizes.extend(std::iter::repeat_n(self.hidden_units, self.hidden_layers));
        sizes.push(output);
        sizes
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iteration: usize,
    pub agent: usize,
    pub mean_utility: f64,
    pub lr: f64,
}

pub fn write_log_csv<W: Write>(log: &[LogRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in log {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Pricing by a trained actor: the Beta mode, or a draw when `sample` is set.
#[derive(Clone, Debug)]
pub struct NeuralPolicy<S> {
    pub net: Arc<Mlp<S>>,
    pub sample: bool,
}

impl<S: Scalar> NeuralPolicy<S> {
    pub fn mode(net: Arc<Mlp<S>>) -> Self {
        Self { net, sample: false }
    }

    pub fn sampling(net: Arc<Mlp<S>>) -> Self {
        Self { net, sample: true }
    }

    fn head<T: Scalar>(&self, agent: usize, obs: &Observation<T>, config: &MarketConfig<T>) -> Result<BetaHead> {
        let mut feat: Vec<S> = Vec::with_capacity(self.net.input_dim());
        write_features(obs, config, &mut feat);
        if feat.len() != self.net.input_dim() {
            return Err(Error::ObservationMismatch { agent });
        }
        let out = self.net.forward_row(&feat);
        Ok(BetaHead::from_raw(out[0].to_f64_lossy(), out[1].to_f64_lossy()))
    }
}

impl<S: Scalar, T: Scalar> Policy<T> for NeuralPolicy<S> {
    fn act(
        &self,
        agent: usize,
        obs: &Observation<T>,
        config: &MarketConfig<T>,
        rng: &mut dyn RngCore,
    ) -> Result<T> {
        let head = self.head(agent, obs, config)?;
        let x = if self.sample { head.sample(rng) } else { head.mode() };
        let (lo, hi) = config.price_bounds(agent);
        let p = to_price(x, lo.to_f64_lossy(), hi.to_f64_lossy());
        Ok(T::lit(p).max(lo).min(hi))
    }

    fn is_deterministic(&self) -> bool {
        !self.sample
    }
}

/// Trained actors for every firm plus the training log.
#[derive(Clone, Debug)]
pub struct LearnedProfile<S> {
    pub config: MarketConfig<f64>,
    pub algorithm: Algorithm,
    pub actors: Vec<Arc<Mlp<S>>>,
    pub log: Vec<LogRow>,
}

impl<S: Scalar> LearnedProfile<S> {
    /// The extracted pure strategy (distribution mode). Without demand
    /// information the extracted strategy is a fixed price path, so it is
    /// returned in tabulated form.
    pub fn profile(&self) -> StrategyProfile<f64> {
        if self.config.information == Information::PartiallyObservable {
            return StrategyProfile::new(
                (0..self.actors.len())
                    .map(|i| Arc::new(OpenLoopPolicy { prices: self.price_path(i) }) as Arc<dyn Policy<f64>>)
                    .collect(),
            );
        }
        StrategyProfile::new(
            self.actors
                .iter()
                .map(|a| Arc::new(NeuralPolicy::mode(a.clone())) as Arc<dyn Policy<f64>>)
                .collect(),
        )
    }

    /// Profile in which every firm samples from its Beta policy.
    pub fn sampling_profile(&self) -> StrategyProfile<f64> {
        StrategyProfile::new(
            self.actors
                .iter()
                .map(|a| Arc::new(NeuralPolicy::sampling(a.clone())) as Arc<dyn Policy<f64>>)
                .collect(),
        )
    }

    /// Mode prices per stage as seen with stage-only observations.
    ///
    /// # Panics
    /// If the networks were trained with full information.
    pub fn price_path(&self, agent: usize) -> Vec<f64> {
        assert_eq!(self.config.information, Information::PartiallyObservable, "price_path needs stage-only observations");
        let (lo, hi) = self.config.price_bounds(agent);
        (1..=self.config.horizon)
            .map(|t| {
                let mut feat: Vec<S> = Vec::new();
                write_stage_feature(t, &self.config, &mut feat);
                let out = self.actors[agent].forward_row(&feat);
                let head = BetaHead::from_raw(out[0].to_f64_lossy(), out[1].to_f64_lossy());
                to_price(head.mode(), lo, hi)
            })
            .collect()
    }

    pub fn final_utilities(&self) -> Vec<f64> {
        let n = self.actors.len();
        let mut out = vec![f64::NAN; n];
        for row in self.log.iter().rev().take(n) {
            out[row.agent] = row.mean_utility;
        }
        out
    }

    pub fn write_log_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_log_csv(&self.log, writer)
    }

    pub fn to_file(&self) -> ProfileFile {
        ProfileFile {
            format: PROFILE_FORMAT.to_string(),
            version: PROFILE_VERSION,
            config_digest: self.config.digest(),
            config: self.config.clone(),
            algorithm: self.algorithm,
            scalar: scalar_name::<S>().to_string(),
            agents: self
                .actors
                .iter()
                .map(|a| NetworkRecord {
                    layer_shapes: a.shapes(),
                    params: a.params().iter().map(|v| v.to_f64_lossy()).collect(),
                })
                .collect(),
        }
    }

    pub fn from_file(file: ProfileFile) -> Result<Self> {
        if file.format != PROFILE_FORMAT {
            return Err(Error::ProfileFormat(format!("unexpected format '{}'", file.format)));
        }
        if file.version != PROFILE_VERSION {
            return Err(Error::ProfileFormat(format!("unsupported version {}", file.version)));
        }
        file.config.validate()?;
        if file.config.digest() != file.config_digest {
            return Err(Error::ProfileFormat("config digest does not match config".into()));
        }
        if file.agents.len() != file.config.n_agents {
            return Err(Error::PolicyCount { expected: file.config.n_agents, found: file.agents.len() });
        }
        let dim = feature_dim(&file.config);
        let actors = file
            .agents
            .iter()
            .enumerate()
            .map(|(i, rec)| {
                let params: Vec<S> = rec.params.iter().map(|&v| S::lit(v)).collect();
                let net = Mlp::from_shapes(&rec.layer_shapes, &params)
                    .ok_or_else(|| Error::ProfileFormat(format!("agent {i}: inconsistent layer shapes")))?;
                if net.input_dim() != dim || net.output_dim() != 2 {
                    return Err(Error::ObservationMismatch { agent: i });
                }
                Ok(Arc::new(net))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { config: file.config, algorithm: file.algorithm, actors, log: Vec::new() })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(f, &self.to_file())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let file: ProfileFile = serde_json::from_reader(f)?;
        Self::from_file(file)
    }
}

pub const PROFILE_FORMAT: &str = "oligopoly-profile";
pub const PROFILE_VERSION: u32 = 1;

fn scalar_name<S: Scalar>() -> &'static str {
    if std::mem::size_of::<S>() == 4 {
        "f32"
    } else {
        "f64"
    }
}

/// Serialized actor networks: layer shapes and flat parameters (per layer,
/// row-major weights then biases), tagged with the market config digest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileFile {
    pub format: String,
    pub version: u32,
    pub config_digest: String,
    pub config: MarketConfig<f64>,
    pub algorithm: Algorithm,
    pub scalar: String,
    pub agents: Vec<NetworkRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkRecord {
    pub layer_shapes: Vec<(usize, usize)>,
    pub params: Vec<f64>,
}

const INIT_STREAM: u64 = 0x1417;
const SHUFFLE_STREAM: u64 = 0x5f1e;

/// Independent learners trained simultaneously: every iteration collects one
/// batch with all firms sampling from their current policies, then updates
/// every firm from its own rewards against those pre-update opponents.
pub fn train_selfplay<S: Scalar>(
    config: &MarketConfig<f64>,
    algo: Algorithm,
    tc: &TrainConfig,
) -> Result<LearnedProfile<S>> {
    train_selfplay_with(config, algo, tc, |_, _| {})
}

/// [`train_selfplay`] with a callback after every iteration receiving the
/// iteration index and each firm's batch mean utility.
pub fn train_selfplay_with<S: Scalar, F: FnMut(usize, &[f64])>(
    config: &MarketConfig<f64>,
    algo: Algorithm,
    tc: &TrainConfig,
    mut on_iteration: F,
) -> Result<LearnedProfile<S>> {
    config.validate()?;
    tc.validate()?;
    let n = config.n_agents;
    let dim = feature_dim(config);
    let mut actors: Vec<Mlp<S>> = Vec::with_capacity(n);
    let mut critics: Vec<Mlp<S>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(tc.seed, &[INIT_STREAM, i as u64]));
        actors.push(Mlp::new(&tc.layer_sizes(dim, 2), 0.01, &mut rng));
        critics.push(Mlp::new(&tc.layer_sizes(dim, 1), 1.0, &mut rng));
    }
    let mut reinforce_opts: Vec<Adam<S>> = actors.iter().map(Adam::new).collect();
    let mut ppo_states: Vec<PpoState<S>> =
        actors.iter().zip(&critics).map(|(a, c)| PpoState::new(a, c)).collect();

    let mut log = Vec::with_capacity(tc.iterations * n);
    for it in 0..tc.iterations {
        let lr = tc.learning_rate_at(it);
        let critic_ref = (algo == Algorithm::Ppo).then_some(critics.as_slice());
        let mut batch = collect(&actors, critic_ref, config, tc.trajectories_per_iteration, tc.seed, it as u64)?;
        for (i, &u) in batch.mean_utility.iter().enumerate() {
            if !u.is_finite() {
                return Err(Error::DivergedTraining { iteration: it, agent: i });
            }
            log.push(LogRow { iteration: it, agent: i, mean_utility: u, lr });
        }
        on_iteration(it, &batch.mean_utility);
        for i in 0..n {
            let ab = &mut batch.agents[i];
            match algo {
                Algorithm::Reinforce => {
                    ab.set_reinforce_targets(config.horizon);
                    reinforce_update(&mut actors[i], &mut reinforce_opts[i], ab, batch.n_traj, lr);
                }
                Algorithm::Ppo => {
                    ab.set_gae_targets(tc.ppo.gamma, tc.ppo.gae_lambda);
                    let seed = mix_seed(tc.seed, &[SHUFFLE_STREAM, it as u64, i as u64]);
                    ppo_update(&mut actors[i], &mut critics[i], &mut ppo_states[i], ab, &tc.ppo, lr, seed);
                }
            }
            if !actors[i].is_finite() {
                return Err(Error::DivergedTraining { iteration: it, agent: i });
            }
        }
    }
    Ok(LearnedProfile {
        config: config.clone(),
        algorithm: algo,
        actors: actors.into_iter().map(Arc::new).collect(),
        log,
    })
}
