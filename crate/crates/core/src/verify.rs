//! Brute-force best-response verification.
//!
//! Against deterministic opponents the market is deterministic, so the state
//! reached at stage `t` is a function of the deviating firm's own action
//! prefix. A depth-first walk over `K` gridded prices per stage therefore
//! enumerates every reachable history, and its maximum is the exact best
//! response within the grid for either information setting.

use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::market::{rollout, step_or_collapse, MarketConfig, MarketState, Policy, StrategyProfile};
use crate::policy::OpenLoopPolicy;
use crate::scalar::Scalar;
use crate::seed::mix_seed;

/// `K` equidistant prices spanning `[c_i, p_max]`, both ends included.
pub fn action_grid<S: Scalar>(agent: usize, k: usize, config: &MarketConfig<S>) -> Vec<S> {
    assert!(k >= 2, "grid needs at least two points");
    let (lo, hi) = config.price_bounds(agent);
    let last = S::from_usize(k - 1).unwrap();
    (0..k)
        .map(|j| {
            if j == k - 1 {
                hi
            } else {
                lo + (hi - lo) * S::from_usize(j).unwrap() / last
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    pub k: usize,
    /// Opponent samples per node when some opponent is stochastic.
    pub mc_samples: Option<usize>,
    pub mc_seed: u64,
    /// Best-response values below this flag the normalized loss.
    pub denominator_threshold: f64,
    pub parallel: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { k: 32, mc_samples: None, mc_seed: 0, denominator_threshold: 0.01, parallel: true }
    }
}

impl VerifyOptions {
    pub fn with_k(k: usize) -> Self {
        Self { k, ..Self::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BestResponse<S> {
    pub value: S,
    /// Own prices along the best branch; replaying them reproduces `value`.
    pub path: Vec<S>,
    pub nodes: u64,
}

impl<S: Scalar> BestResponse<S> {
    pub fn policy(&self) -> Arc<dyn Policy<S>> {
        Arc::new(OpenLoopPolicy { prices: self.path.clone() })
    }
}

struct Search<'a, S: Scalar> {
    profile: &'a StrategyProfile<S>,
    config: &'a MarketConfig<S>,
    agent: usize,
    grid: Vec<S>,
    /// Opponent randomness scenarios; empty for deterministic opponents.
    scenarios: usize,
    seed: u64,
}

fn scenario_seed(seed: u64, scenario: usize, stage: usize, agent: usize) -> u64 {
    mix_seed(seed, &[scenario as u64, stage as u64, agent as u64])
}

impl<S: Scalar> Search<'_, S> {
    fn opponent_prices(&self, state: &MarketState<S>, scenario: usize) -> Result<Vec<S>> {
        let n = self.config.n_agents;
        let mut prices = vec![S::zero(); n];
        for j in (0..n).filter(|&j| j != self.agent && state.active[j]) {
            let obs = crate::market::observe(state, self.config, j);
            let mut rng = ChaCha8Rng::seed_from_u64(scenario_seed(self.seed, scenario, state.t, j));
            prices[j] = self.profile.policies[j].act(j, &obs, self.config, &mut rng)?;
        }
        Ok(prices)
    }

    /// Best continuation value from `states` (one per scenario), averaged
    /// over scenarios.
    fn value(&self, states: &[MarketState<S>], nodes: &mut u64) -> Result<(S, Vec<S>)> {
        let first = &states[0];
        if first.t > self.config.horizon || states.iter().all(|s| !s.active[self.agent]) {
            return Ok((S::zero(), Vec::new()));
        }
        let opp: Vec<Vec<S>> = states
            .iter()
            .enumerate()
            .map(|(m, s)| self.opponent_prices(s, m))
            .collect::<Result<_>>()?;
        let mut best: Option<(S, Vec<S>)> = None;
        for &a in &self.grid {
            let (v, tail) = self.branch(states, &opp, a, nodes)?;
            if best.as_ref().is_none_or(|(b, _)| v > *b) {
                let mut path = Vec::with_capacity(tail.len() + 1);
                path.push(a);
                path.extend(tail);
                best = Some((v, path));
            }
        }
        Ok(best.expect("grid is non-empty"))
    }

    fn branch(
        &self,
        states: &[MarketState<S>],
        opp: &[Vec<S>],
        own: S,
        nodes: &mut u64,
    ) -> Result<(S, Vec<S>)> {
        *nodes += 1;
        let mut reward = S::zero();
        let mut next = Vec::with_capacity(states.len());
        for (s, prices) in states.iter().zip(opp) {
            let mut prices = prices.clone();
            prices[self.agent] = own;
            let (ns, out) = step_or_collapse(s, &prices, self.config)?;
            reward += out.rewards[self.agent];
            next.push(ns);
        }
        if states.len() > 1 {
            reward /= S::from_usize(states.len()).unwrap();
        }
        let (cont, tail) = self.value(&next, nodes)?;
        Ok((reward + cont, tail))
    }
}

/// Exact best-response value of `agent` over the `K`-point price grid.
pub fn best_response_value<S: Scalar>(
    profile: &StrategyProfile<S>,
    agent: usize,
    options: &VerifyOptions,
    config: &MarketConfig<S>,
) -> Result<BestResponse<S>> {
    config.validate()?;
    if profile.len() != config.n_agents {
        return Err(Error::PolicyCount { expected: config.n_agents, found: profile.len() });
    }
    let stochastic = (0..config.n_agents)
        .find(|&j| j != agent && !profile.policies[j].is_deterministic());
    let scenarios = match (stochastic, options.mc_samples) {
        (Some(j), None) => return Err(Error::OpponentStochastic { agent: j }),
        (Some(_), Some(m)) => m.max(1),
        (None, _) => 1,
    };
    let search = Search {
        profile,
        config,
        agent,
        grid: action_grid(agent, options.k, config),
        scenarios,
        seed: options.mc_seed,
    };
    let roots = vec![config.initial_state(); search.scenarios];
    let opp: Vec<Vec<S>> = roots
        .iter()
        .enumerate()
        .map(|(m, s)| search.opponent_prices(s, m))
        .collect::<Result<_>>()?;

    let per_branch = |&a: &S| -> Result<(S, S, Vec<S>, u64)> {
        let mut nodes = 0;
        let (v, tail) = search.branch(&roots, &opp, a, &mut nodes)?;
        Ok((a, v, tail, nodes))
    };
    let branches: Vec<(S, S, Vec<S>, u64)> = if options.parallel {
        search.grid.par_iter().map(per_branch).collect::<Result<_>>()?
    } else {
        search.grid.iter().map(per_branch).collect::<Result<_>>()?
    };
    // first maximum in grid order, independent of how branches were split
    let mut best: Option<&(S, S, Vec<S>, u64)> = None;
    for b in &branches {
        if best.is_none_or(|x| b.1 > x.1) {
            best = Some(b);
        }
    }
    let (a, value, tail, _) = best.expect("grid is non-empty");
    let mut path = vec![*a];
    path.extend(tail.iter().copied());
    Ok(BestResponse {
        value: *value,
        path,
        nodes: branches.iter().map(|b| b.3).sum(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgentVerification<S> {
    pub agent: usize,
    pub best_response_value: S,
    pub current_value: S,
    pub loss: S,
    pub normalized_loss: S,
    pub denominator_flag: bool,
    pub nodes: u64,
    #[serde(skip)]
    pub best_response_path: Vec<S>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerificationReport<S> {
    pub k: usize,
    pub agents: Vec<AgentVerification<S>>,
    pub epsilon: S,
}

impl<S: Scalar> VerificationReport<S> {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "agent",
            "K",
            "current_value",
            "br_value",
            "loss",
            "normalized_loss",
            "denominator_flag",
        ])?;
        for a in &self.agents {
            w.write_record(&[
                a.agent.to_string(),
                self.k.to_string(),
                a.current_value.to_f64_lossy().to_string(),
                a.best_response_value.to_f64_lossy().to_string(),
                a.loss.to_f64_lossy().to_string(),
                a.normalized_loss.to_f64_lossy().to_string(),
                a.denominator_flag.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// One-line JSON summary.
    pub fn summary_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Expected utilities of `profile`, averaged over `samples` seeded rollouts
/// when some policy is stochastic.
pub fn current_values<S: Scalar>(
    profile: &StrategyProfile<S>,
    config: &MarketConfig<S>,
    samples: usize,
    seed: u64,
) -> Result<Vec<S>> {
    if profile.is_deterministic() {
        return Ok(rollout(profile, config, None)?.utilities);
    }
    let mut sum = vec![S::zero(); config.n_agents];
    for m in 0..samples.max(1) {
        let traj = rollout(profile, config, Some(scenario_seed(seed, m, 0, usize::MAX)))?;
        for (s, u) in sum.iter_mut().zip(traj.utilities) {
            *s += u;
        }
    }
    let m = S::from_usize(samples.max(1)).unwrap();
    Ok(sum.into_iter().map(|s| s / m).collect())
}

/// Brute-force utility loss of every firm.
pub fn verify_profile<S: Scalar>(
    profile: &StrategyProfile<S>,
    options: &VerifyOptions,
    config: &MarketConfig<S>,
) -> Result<VerificationReport<S>> {
    let current = current_values(profile, config, options.mc_samples.unwrap_or(1), options.mc_seed)?;
    let threshold = S::lit(options.denominator_threshold);
    let agents = (0..config.n_agents)
        .map(|agent| {
            let br = best_response_value(profile, agent, options, config)?;
            let loss = (br.value - current[agent]).max(S::zero());
            let normalized_loss = if br.value > S::zero() { loss / br.value } else { S::zero() };
            Ok(AgentVerification {
                agent,
                best_response_value: br.value,
                current_value: current[agent],
                loss,
                normalized_loss,
                denominator_flag: br.value < threshold,
                nodes: br.nodes,
                best_response_path: br.path,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let epsilon = agents.iter().fold(S::zero(), |m, a| m.max(a.loss));
    Ok(VerificationReport { k: options.k, agents, epsilon })
}
