//! The finite-horizon oligopoly game: linear demand with inertia, optional
//! dropouts with area-preserving demand redistribution.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cast_vec, Scalar};

/// What a firm sees before pricing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Information {
    /// The whole state `(t, D^1, .., D^N)`.
    #[serde(rename = "full", alias = "fully_observable")]
    FullyObservable,
    /// Only the stage index.
    #[serde(rename = "partial", alias = "partially_observable")]
    PartiallyObservable,
}

impl fmt::Display for Information {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Information::FullyObservable => f.write_str("full"),
            Information::PartiallyObservable => f.write_str("partial"),
        }
    }
}

/// Full game definition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct MarketConfig<S> {
    pub n_agents: usize,
    pub horizon: usize,
    pub initial_demands: Vec<S>,
    pub unit_costs: Vec<S>,
    #[serde(default)]
    pub dropouts: bool,
    pub information: Information,
    /// Upper price bound. `None` selects [`MarketConfig::default_p_max`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_max: Option<S>,
}

impl<S: Scalar> MarketConfig<S> {
    /// Partially observable game without dropouts and the default price cap.
    pub fn new(unit_costs: Vec<S>, initial_demands: Vec<S>, horizon: usize) -> Self {
        Self {
            n_agents: unit_costs.len(),
            horizon,
            initial_demands,
            unit_costs,
            dropouts: false,
            information: Information::PartiallyObservable,
            p_max: None,
        }
    }

    /// `n` identical firms.
    pub fn symmetric(n: usize, cost: S, demand: S, horizon: usize) -> Self {
        Self::new(vec![cost; n], vec![demand; n], horizon)
    }

    pub fn with_dropouts(mut self, dropouts: bool) -> Self {
        self.dropouts = dropouts;
        self
    }

    pub fn with_information(mut self, information: Information) -> Self {
        self.information = information;
        self
    }

    pub fn with_p_max(mut self, p_max: S) -> Self {
        self.p_max = Some(p_max);
        self
    }

    /// Largest demand intercept any single firm can reach: all customer area
    /// concentrated on one survivor.
    pub fn demand_cap(&self) -> S {
        self.initial_demands
            .iter()
            .map(|&d| d * d)
            .sum::<S>()
            .sqrt()
    }

    /// Stage-wise monopoly price at the demand cap for the costliest firm.
    pub fn default_p_max(&self) -> S {
        let max_cost = self
            .unit_costs
            .iter()
            .copied()
            .fold(S::neg_infinity(), S::max);
        (self.demand_cap() + max_cost) / S::lit(2.0)
    }

    pub fn p_max(&self) -> S {
        self.p_max.unwrap_or_else(|| self.default_p_max())
    }

    /// Action interval `[c_i, p_max]`.
    pub fn price_bounds(&self, agent: usize) -> (S, S) {
        (self.unit_costs[agent], self.p_max())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_agents == 0 {
            return bad("n_agents must be at least 1".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if self.unit_costs.len() != self.n_agents {
            return bad(format!(
                "unit_costs has {} entries, n_agents is {}",
                self.unit_costs.len(),
                self.n_agents
            ));
        }
        if self.initial_demands.len() != self.n_agents {
            return bad(format!(
                "initial_demands has {} entries, n_agents is {}",
                self.initial_demands.len(),
                self.n_agents
            ));
        }
        let p_max = self.p_max();
        if !p_max.is_finite() {
            return bad("p_max is not finite".into());
        }
        for (i, (&c, &d)) in self.unit_costs.iter().zip(&self.initial_demands).enumerate() {
            if !(c >= S::zero() && c < p_max) {
                return bad(format!("agent {i}: cost {c} not in [0, p_max={p_max})"));
            }
            if !(d >= S::zero() && d.is_finite()) {
                return bad(format!("agent {i}: initial demand {d} must be finite and >= 0"));
            }
        }
        Ok(())
    }

    pub fn initial_state(&self) -> MarketState<S> {
        MarketState {
            t: 1,
            demands: self.initial_demands.clone(),
            active: vec![true; self.n_agents],
        }
    }

    pub fn cast<T: Scalar>(&self) -> MarketConfig<T> {
        MarketConfig {
            n_agents: self.n_agents,
            horizon: self.horizon,
            initial_demands: cast_vec(&self.initial_demands),
            unit_costs: cast_vec(&self.unit_costs),
            dropouts: self.dropouts,
            information: self.information,
            p_max: self.p_max.map(|p| p.cast()),
        }
    }

    /// Stable digest of the game definition, used to key stored results.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(&self.cast::<f64>()).expect("config serializes");
        let hash = Sha256::digest(json.as_bytes());
        hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// State at the start of stage `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct MarketState<S> {
    /// 1-based stage index.
    pub t: usize,
    pub demands: Vec<S>,
    pub active: Vec<bool>,
}

impl<S: Scalar> MarketState<S> {
    pub fn n_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }
}

/// Everything that happened in one stage. Inactive firms carry zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct StageOutcome<S> {
    pub stage: usize,
    pub prices: Vec<S>,
    pub mean_price: S,
    pub price_deltas: Vec<S>,
    pub quantities: Vec<S>,
    pub rewards: Vec<S>,
    /// Firms that became inactive at the end of this stage.
    pub exits: Vec<usize>,
}

/// Profit of one firm in one stage.
#[inline]
pub fn stage_reward<S: Scalar>(price: S, cost: S, demand: S) -> S {
    (price - cost) * (demand - price)
}

/// Removes firms whose tentative demand fell below cost and hands their
/// customer area to the survivors, proportionally to the survivors' demand.
///
/// Returns next-stage demands (zero for every inactive firm) and the firms
/// that exit now. The sum of squared demands over survivors equals the sum of
/// squared tentative demands over all previously active firms.
pub fn apply_dropouts<S: Scalar>(
    tentative: &[S],
    costs: &[S],
    active: &[bool],
) -> Result<(Vec<S>, Vec<usize>)> {
    let n = tentative.len();
    if costs.len() != n || active.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: costs.len().min(active.len()),
        });
    }
    let exits: Vec<usize> = (0..n)
        .filter(|&i| active[i] && tentative[i] < costs[i])
        .collect();
    let mut demands: Vec<S> = (0..n)
        .map(|i| if active[i] { tentative[i] } else { S::zero() })
        .collect();
    if exits.is_empty() {
        return Ok((demands, exits));
    }
    let survivors = active.iter().filter(|&&a| a).count() - exits.len();
    if survivors == 0 {
        return Err(Error::AllFirmsExit { stage: 0 });
    }
    let lost_area: S = exits.iter().map(|&j| tentative[j] * tentative[j]).sum();
    for &j in &exits {
        demands[j] = S::zero();
    }
    let survivor_total: S = demands.iter().copied().sum();
    if survivor_total <= S::zero() {
        return Err(Error::DegenerateRedistribution);
    }
    for d in demands.iter_mut().filter(|d| **d > S::zero()) {
        *d = (*d * *d + *d / survivor_total * lost_area).sqrt();
    }
    Ok((demands, exits))
}

/// Plays one stage. Prices of inactive firms are ignored.
pub fn step<S: Scalar>(
    state: &MarketState<S>,
    prices: &[S],
    config: &MarketConfig<S>,
) -> Result<(MarketState<S>, StageOutcome<S>)> {
    advance(state, prices, config, false)
}

/// Like [`step`], but a stage in which every active firm falls below cost
/// ends the market instead of failing: all of them exit and later stages pay
/// nothing. Used where whole batches of playthroughs must keep going.
pub fn step_or_collapse<S: Scalar>(
    state: &MarketState<S>,
    prices: &[S],
    config: &MarketConfig<S>,
) -> Result<(MarketState<S>, StageOutcome<S>)> {
    advance(state, prices, config, true)
}

fn advance<S: Scalar>(
    state: &MarketState<S>,
    prices: &[S],
    config: &MarketConfig<S>,
    collapse: bool,
) -> Result<(MarketState<S>, StageOutcome<S>)> {
    let n = config.n_agents;
    if prices.len() != n {
        return Err(Error::LengthMismatch { expected: n, found: prices.len() });
    }
    if state.t > config.horizon {
        return Err(Error::InvalidConfig(format!(
            "stage {} beyond horizon {}",
            state.t, config.horizon
        )));
    }
    let p_max = config.p_max();
    let mut n_active = 0usize;
    let mut price_sum = S::zero();
    for i in (0..n).filter(|&i| state.active[i]) {
        let (lo, p) = (config.unit_costs[i], prices[i]);
        if !(p >= lo && p <= p_max) {
            return Err(Error::PriceOutOfBounds {
                agent: i,
                price: p.to_f64_lossy(),
                lo: lo.to_f64_lossy(),
                hi: p_max.to_f64_lossy(),
            });
        }
        n_active += 1;
        price_sum += p;
    }
    let mean_price = if n_active > 0 {
        price_sum / S::from_usize(n_active).unwrap()
    } else {
        S::zero()
    };

    let mut outcome = StageOutcome {
        stage: state.t,
        prices: vec![S::zero(); n],
        mean_price,
        price_deltas: vec![S::zero(); n],
        quantities: vec![S::zero(); n],
        rewards: vec![S::zero(); n],
        exits: Vec::new(),
    };
    let mut tentative = vec![S::zero(); n];
    for i in (0..n).filter(|&i| state.active[i]) {
        let (p, d) = (prices[i], state.demands[i]);
        outcome.prices[i] = p;
        outcome.price_deltas[i] = p - mean_price;
        outcome.quantities[i] = d - p;
        outcome.rewards[i] = stage_reward(p, config.unit_costs[i], d);
        tentative[i] = d - outcome.price_deltas[i];
    }

    let demands = if config.dropouts {
        match apply_dropouts(&tentative, &config.unit_costs, &state.active) {
            Ok((demands, exits)) => {
                outcome.exits = exits;
                demands
            }
            Err(Error::AllFirmsExit { .. }) if collapse => {
                outcome.exits = (0..n).filter(|&i| state.active[i]).collect();
                vec![S::zero(); n]
            }
            Err(Error::AllFirmsExit { .. }) => return Err(Error::AllFirmsExit { stage: state.t }),
            Err(e) => return Err(e),
        }
    } else {
        tentative
    };
    let mut active = state.active.clone();
    for &j in &outcome.exits {
        active[j] = false;
    }
    let next = MarketState { t: state.t + 1, demands, active };
    Ok((next, outcome))
}

/// Observation handed to a firm's policy.
#[derive(Clone, Debug, PartialEq)]
pub enum Observation<S> {
    Full { t: usize, demands: Vec<S>, active: Vec<bool> },
    Partial { t: usize },
}

impl<S: Scalar> Observation<S> {
    pub fn t(&self) -> usize {
        match self {
            Observation::Full { t, .. } | Observation::Partial { t } => *t,
        }
    }

    pub fn demand(&self, agent: usize) -> Option<S> {
        match self {
            Observation::Full { demands, .. } => demands.get(agent).copied(),
            Observation::Partial { .. } => None,
        }
    }
}

pub fn observe<S: Scalar>(
    state: &MarketState<S>,
    config: &MarketConfig<S>,
    _agent: usize,
) -> Observation<S> {
    match config.information {
        Information::FullyObservable => Observation::Full {
            t: state.t,
            demands: state.demands.clone(),
            active: state.active.clone(),
        },
        Information::PartiallyObservable => Observation::Partial { t: state.t },
    }
}

/// A pricing strategy for one firm.
pub trait Policy<S: Scalar>: Send + Sync + fmt::Debug {
    fn act(
        &self,
        agent: usize,
        obs: &Observation<S>,
        config: &MarketConfig<S>,
        rng: &mut dyn RngCore,
    ) -> Result<S>;

    fn is_deterministic(&self) -> bool {
        true
    }
}

/// One policy per firm.
#[derive(Clone, Debug)]
pub struct StrategyProfile<S> {
    pub policies: Vec<Arc<dyn Policy<S>>>,
}

impl<S: Scalar> StrategyProfile<S> {
    pub fn new(policies: Vec<Arc<dyn Policy<S>>>) -> Self {
        Self { policies }
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    pub fn with_policy(&self, agent: usize, policy: Arc<dyn Policy<S>>) -> Self {
        let mut policies = self.policies.clone();
        policies[agent] = policy;
        Self { policies }
    }

    pub fn is_deterministic(&self) -> bool {
        self.policies.iter().all(|p| p.is_deterministic())
    }

    /// Prices of every active firm at `state`; zero for inactive firms.
    pub fn prices(
        &self,
        state: &MarketState<S>,
        config: &MarketConfig<S>,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<S>> {
        (0..config.n_agents)
            .map(|i| {
                if state.active[i] {
                    self.policies[i].act(i, &observe(state, config, i), config, rng)
                } else {
                    Ok(S::zero())
                }
            })
            .collect()
    }
}

/// One complete playthrough.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<S> {
    pub outcomes: Vec<StageOutcome<S>>,
    /// `horizon + 1` states; the last one follows the final stage.
    pub states: Vec<MarketState<S>>,
    pub utilities: Vec<S>,
}

impl<S: Scalar> Trajectory<S> {
    pub fn horizon(&self) -> usize {
        self.outcomes.len()
    }

    pub fn rewards_of(&self, agent: usize) -> Vec<S> {
        self.outcomes.iter().map(|o| o.rewards[agent]).collect()
    }

    pub fn prices_of(&self, agent: usize) -> Vec<S> {
        self.outcomes.iter().map(|o| o.prices[agent]).collect()
    }

    /// Stage at the end of which `agent` exited.
    pub fn exit_stage(&self, agent: usize) -> Option<usize> {
        self.outcomes
            .iter()
            .find(|o| o.exits.contains(&agent))
            .map(|o| o.stage)
    }

    /// Firms that exited at some point, in order of exit.
    pub fn exited(&self) -> Vec<usize> {
        self.outcomes.iter().flat_map(|o| o.exits.iter().copied()).collect()
    }

    /// First stage in which some rival of `agent` is no longer active.
    pub fn first_rival_absence(&self, agent: usize) -> Option<usize> {
        self.outcomes
            .iter()
            .find(|o| o.exits.iter().any(|&j| j != agent))
            .map(|o| o.stage + 1)
    }

    /// One row per (stage, agent).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "stage",
            "agent",
            "active",
            "demand",
            "price",
            "quantity",
            "reward",
            "exited_this_stage",
        ])?;
        for (o, s) in self.outcomes.iter().zip(&self.states) {
            for i in 0..s.demands.len() {
                w.write_record(&[
                    o.stage.to_string(),
                    i.to_string(),
                    u8::from(s.active[i]).to_string(),
                    s.demands[i].to_f64_lossy().to_string(),
                    o.prices[i].to_f64_lossy().to_string(),
                    o.quantities[i].to_f64_lossy().to_string(),
                    o.rewards[i].to_f64_lossy().to_string(),
                    u8::from(o.exits.contains(&i)).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Plays all stages. Stochastic policies draw from a ChaCha stream seeded with
/// `seed` (0 when absent).
pub fn rollout<S: Scalar>(
    profile: &StrategyProfile<S>,
    config: &MarketConfig<S>,
    seed: Option<u64>,
) -> Result<Trajectory<S>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
    rollout_with_rng(profile, config, &mut rng)
}

pub fn rollout_with_rng<S: Scalar>(
    profile: &StrategyProfile<S>,
    config: &MarketConfig<S>,
    rng: &mut dyn RngCore,
) -> Result<Trajectory<S>> {
    if profile.len() != config.n_agents {
        return Err(Error::PolicyCount { expected: config.n_agents, found: profile.len() });
    }
    let mut state = config.initial_state();
    let mut states = Vec::with_capacity(config.horizon + 1);
    let mut outcomes = Vec::with_capacity(config.horizon);
    let mut utilities = vec![S::zero(); config.n_agents];
    for _ in 0..config.horizon {
        let prices = profile.prices(&state, config, rng)?;
        let (next, outcome) = step(&state, &prices, config)?;
        for (u, &r) in utilities.iter_mut().zip(&outcome.rewards) {
            *u += r;
        }
        states.push(state);
        outcomes.push(outcome);
        state = next;
    }
    states.push(state);
    Ok(Trajectory { outcomes, states, utilities })
}
