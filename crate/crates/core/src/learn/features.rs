//! Network input layout.

use crate::market::{Information, MarketConfig, Observation};
use crate::scalar::Scalar;

/// Input width for a config: `1` without demand information, `1 + 2N` with.
pub fn feature_dim<S: Scalar>(config: &MarketConfig<S>) -> usize {
    match config.information {
        Information::PartiallyObservable => 1,
        Information::FullyObservable => 1 + 2 * config.n_agents,
    }
}

/// `[t/T]`, or `[t/T, D^1/D_cap, .., D^N/D_cap, active^1, .., active^N]`.
pub fn encode_observation<S: Scalar>(obs: &Observation<S>, config: &MarketConfig<S>) -> Vec<S> {
    let mut out = Vec::with_capacity(feature_dim(config));
    write_features(obs, config, &mut out);
    out
}

pub(crate) fn write_features<S: Scalar, T: Scalar>(
    obs: &Observation<S>,
    config: &MarketConfig<S>,
    out: &mut Vec<T>,
) {
    match obs {
        Observation::Partial { t } => write_stage_feature(*t, config, out),
        Observation::Full { t, demands, active } => {
            write_state_features(*t, demands, active, config, out)
        }
    }
}

pub(crate) fn write_stage_feature<S: Scalar, T: Scalar>(
    t: usize,
    config: &MarketConfig<S>,
    out: &mut Vec<T>,
) {
    out.push(T::lit(t as f64 / config.horizon as f64));
}

pub(crate) fn write_state_features<S: Scalar, T: Scalar>(
    t: usize,
    demands: &[S],
    active: &[bool],
    config: &MarketConfig<S>,
    out: &mut Vec<T>,
) {
    write_stage_feature(t, config, out);
    let cap = config.demand_cap();
    out.extend(demands.iter().zip(active).map(|(&d, &a)| {
        if a {
            (d / cap).cast::<T>()
        } else {
            T::zero()
        }
    }));
    out.extend(active.iter().map(|&a| if a { T::one() } else { T::zero() }));
}
