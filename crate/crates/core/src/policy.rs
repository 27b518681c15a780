//! Deterministic table policies.

use std::sync::Arc;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::market::{MarketConfig, Observation, Policy, StrategyProfile};
use crate::scalar::Scalar;

fn clamp_price<S: Scalar>(price: S, agent: usize, config: &MarketConfig<S>) -> S {
    let (lo, hi) = config.price_bounds(agent);
    price.max(lo).min(hi)
}

/// Commits to one price per stage, whatever is observed.
#[derive(Clone, Debug, PartialEq)]
pub struct OpenLoopPolicy<S> {
    pub prices: Vec<S>,
}

impl<S: Scalar> Policy<S> for OpenLoopPolicy<S> {
    fn act(
        &self,
        agent: usize,
        obs: &Observation<S>,
        config: &MarketConfig<S>,
        _rng: &mut dyn RngCore,
    ) -> Result<S> {
        let t = obs.t();
        let p = *self
            .prices
            .get(t - 1)
            .ok_or(Error::LengthMismatch { expected: t, found: self.prices.len() })?;
        Ok(clamp_price(p, agent, config))
    }
}

/// `p = lambda1[t] + lambda2[t] * D_own`, clamped to the action interval.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearFeedbackPolicy<S> {
    pub lambda1: Vec<S>,
    pub lambda2: Vec<S>,
}

impl<S: Scalar> Policy<S> for LinearFeedbackPolicy<S> {
    fn act(
        &self,
        agent: usize,
        obs: &Observation<S>,
        config: &MarketConfig<S>,
        _rng: &mut dyn RngCore,
    ) -> Result<S> {
        let demand = obs.demand(agent).ok_or(Error::ObservationMismatch { agent })?;
        let t = obs.t() - 1;
        if t >= self.lambda1.len() {
            return Err(Error::LengthMismatch { expected: t + 1, found: self.lambda1.len() });
        }
        Ok(clamp_price(self.lambda1[t] + self.lambda2[t] * demand, agent, config))
    }
}

/// Same price in every stage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantPolicy<S> {
    pub price: S,
}

impl<S: Scalar> Policy<S> for ConstantPolicy<S> {
    fn act(
        &self,
        agent: usize,
        _obs: &Observation<S>,
        config: &MarketConfig<S>,
        _rng: &mut dyn RngCore,
    ) -> Result<S> {
        Ok(clamp_price(self.price, agent, config))
    }
}

/// Profile from a `T x N` price table (`prices[t][agent]`).
pub fn open_loop_profile<S: Scalar>(prices: &[Vec<S>]) -> StrategyProfile<S> {
    let n = prices.first().map_or(0, Vec::len);
    let policies = (0..n)
        .map(|i| {
            Arc::new(OpenLoopPolicy { prices: prices.iter().map(|row| row[i]).collect() })
                as Arc<dyn Policy<S>>
        })
        .collect();
    StrategyProfile::new(policies)
}

/// Profile from `T x N` coefficient tables.
pub fn feedback_profile<S: Scalar>(lambda1: &[Vec<S>], lambda2: &[Vec<S>]) -> StrategyProfile<S> {
    let n = lambda1.first().map_or(0, Vec::len);
    let policies = (0..n)
        .map(|i| {
            Arc::new(LinearFeedbackPolicy {
                lambda1: lambda1.iter().map(|row| row[i]).collect(),
                lambda2: lambda2.iter().map(|row| row[i]).collect(),
            }) as Arc<dyn Policy<S>>
        })
        .collect();
    StrategyProfile::new(policies)
}
