//! Predatory incentives, surplus and market regimes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{StageOutcome, Trajectory};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct PredationRecord<S> {
    pub agent: usize,
    /// First stage in which a rival is gone.
    pub tau: Option<usize>,
    pub sacrifice: S,
    pub recoupment: S,
    pub pi: S,
}

/// Profit given up before a rival's exit and regained after it, both relative
/// to the no-exit equilibrium rewards. Stages are 1-based; stages before
/// `tau` count towards the sacrifice, the rest towards the recoupment.
pub fn predatory_incentive<S: Scalar>(
    pi_rewards: &[S],
    equ_rewards: &[S],
    tau: Option<usize>,
) -> Result<PredationRecord<S>> {
    if pi_rewards.len() != equ_rewards.len() {
        return Err(Error::LengthMismatch { expected: equ_rewards.len(), found: pi_rewards.len() });
    }
    let Some(tau) = tau else {
        return Ok(PredationRecord {
            agent: 0,
            tau: None,
            sacrifice: S::zero(),
            recoupment: S::zero(),
            pi: S::zero(),
        });
    };
    let mut sacrifice = S::zero();
    let mut recoupment = S::zero();
    for (k, (&r, &e)) in pi_rewards.iter().zip(equ_rewards).enumerate() {
        if k + 1 < tau {
            sacrifice += (e - r).max(S::zero());
        } else {
            recoupment += (r - e).max(S::zero());
        }
    }
    Ok(PredationRecord { agent: 0, tau: Some(tau), sacrifice, recoupment, pi: recoupment - sacrifice })
}

/// Predatory incentive of every firm in `traj` against `baseline`.
pub fn predation_records<S: Scalar>(
    traj: &Trajectory<S>,
    baseline: &Trajectory<S>,
) -> Result<Vec<PredationRecord<S>>> {
    check_compatible(traj, baseline)?;
    let n = traj.utilities.len();
    (0..n)
        .map(|i| {
            let mut rec = predatory_incentive(
                &traj.rewards_of(i),
                &baseline.rewards_of(i),
                traj.first_rival_absence(i),
            )?;
            rec.agent = i;
            Ok(rec)
        })
        .collect()
}

/// Producer and consumer surplus of one stage.
pub fn surplus<S: Scalar>(outcome: &StageOutcome<S>) -> (S, S) {
    let ps = outcome.rewards.iter().copied().sum();
    let cs = outcome.quantities.iter().map(|&q| q * q).sum();
    (ps, cs)
}

#[derive(Clone, Debug, PartialEq)]
pub struct WelfareRecord<S> {
    pub producer_surplus: Vec<S>,
    pub consumer_surplus: Vec<S>,
    pub total_welfare: S,
    pub delta_ps: S,
    pub delta_cs: S,
    pub delta_w: S,
}

fn check_compatible<S: Scalar>(a: &Trajectory<S>, b: &Trajectory<S>) -> Result<()> {
    if a.horizon() != b.horizon() || a.utilities.len() != b.utilities.len() {
        return Err(Error::ConfigMismatch(format!(
            "{} stages x {} firms vs {} stages x {} firms",
            a.horizon(),
            a.utilities.len(),
            b.horizon(),
            b.utilities.len()
        )));
    }
    Ok(())
}

fn surplus_paths<S: Scalar>(traj: &Trajectory<S>) -> (Vec<S>, Vec<S>) {
    traj.outcomes.iter().map(surplus).unzip()
}

pub fn welfare_difference<S: Scalar>(
    traj: &Trajectory<S>,
    baseline: &Trajectory<S>,
) -> Result<WelfareRecord<S>> {
    check_compatible(traj, baseline)?;
    let (ps, cs) = surplus_paths(traj);
    let (base_ps, base_cs) = surplus_paths(baseline);
    let sum = |v: &[S]| v.iter().copied().sum::<S>();
    let delta_ps = sum(&ps) - sum(&base_ps);
    let delta_cs = sum(&cs) - sum(&base_cs);
    let total_welfare = ps.iter().zip(&cs).map(|(&p, &c)| p + c).sum();
    let base_welfare: S = base_ps.iter().zip(&base_cs).map(|(&p, &c)| p + c).sum();
    Ok(WelfareRecord {
        producer_surplus: ps,
        consumer_surplus: cs,
        total_welfare,
        delta_ps,
        delta_cs,
        delta_w: total_welfare - base_welfare,
    })
}

/// Market outcome from the point of view of firm 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegimeLabel {
    /// Firm 0 drives out every rival.
    Dominance,
    /// Firm 0 drives out some rivals and shares the market with the rest.
    Predation,
    /// Nobody exits.
    Competition,
    /// Firm 0 is driven out, the rivals all survive.
    Marginalization,
    Other,
}

impl RegimeLabel {
    pub const ALL: [RegimeLabel; 5] = [
        RegimeLabel::Dominance,
        RegimeLabel::Predation,
        RegimeLabel::Competition,
        RegimeLabel::Marginalization,
        RegimeLabel::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RegimeLabel::Dominance => "dominance",
            RegimeLabel::Predation => "predation",
            RegimeLabel::Competition => "competition",
            RegimeLabel::Marginalization => "marginalization",
            RegimeLabel::Other => "other",
        }
    }
}

impl fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RegimeLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RegimeLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown regime {s:?}")))
    }
}

/// Regime of a playthrough from the set of firms that exited.
pub fn classify_exits(n_agents: usize, exited: &[usize]) -> RegimeLabel {
    let focal_out = exited.contains(&0);
    let rivals_out = (1..n_agents).filter(|j| exited.contains(j)).count();
    let rivals = n_agents.saturating_sub(1);
    match (focal_out, rivals_out) {
        (false, 0) => RegimeLabel::Competition,
        (false, k) if k == rivals => RegimeLabel::Dominance,
        (false, _) => RegimeLabel::Predation,
        (true, 0) => RegimeLabel::Marginalization,
        (true, _) => RegimeLabel::Other,
    }
}

pub fn classify_regime<S: Scalar>(traj: &Trajectory<S>) -> RegimeLabel {
    classify_exits(traj.utilities.len(), &traj.exited())
}

/// Most frequent label; ties go to the first label in [`RegimeLabel::ALL`].
pub fn aggregate_regime(labels: &[RegimeLabel]) -> Result<RegimeLabel> {
    if labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    let count = |l: RegimeLabel| labels.iter().filter(|&&x| x == l).count();
    let mut best = RegimeLabel::ALL[0];
    for l in RegimeLabel::ALL {
        if count(l) > count(best) {
            best = l;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{rollout, MarketConfig};
    use crate::policy::open_loop_profile;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pi_examples() {
        let none = predatory_incentive(&[0.1, 0.2], &[0.0, 0.0], None).unwrap();
        assert_eq!(none.pi, 0.0);

        let equ = [0.005, 0.007, 0.009, 0.010];
        let pi = [0.001, 0.002, 0.020, 0.030];
        let rec = predatory_incentive(&pi, &equ, Some(3)).unwrap();
        assert_abs_diff_eq!(rec.sacrifice, 0.009, epsilon = 1e-15);
        assert_abs_diff_eq!(rec.recoupment, 0.031, epsilon = 1e-15);
        assert_abs_diff_eq!(rec.pi, 0.022, epsilon = 1e-15);

        let same = predatory_incentive(&equ, &equ, Some(2)).unwrap();
        assert_eq!((same.sacrifice, same.recoupment, same.pi), (0.0, 0.0, 0.0));

        assert!(matches!(
            predatory_incentive(&[0.1], &[0.1, 0.2], Some(1)),
            Err(Error::LengthMismatch { .. })
        ));
    }

    fn outcome(demands: &[f64], prices: &[f64], costs: &[f64]) -> StageOutcome<f64> {
        StageOutcome {
            stage: 1,
            prices: prices.to_vec(),
            mean_price: 0.0,
            price_deltas: vec![0.0; prices.len()],
            quantities: demands.iter().zip(prices).map(|(d, p)| d - p).collect(),
            rewards: (0..prices.len()).map(|i| (prices[i] - costs[i]) * (demands[i] - prices[i])).collect(),
            exits: vec![],
        }
    }

    #[test]
    fn surplus_examples() {
        let (ps, cs) = surplus(&outcome(&[1.0, 1.0], &[0.9, 0.8], &[0.8, 0.8]));
        assert_abs_diff_eq!(ps, 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(cs, 0.05, epsilon = 1e-15);
        let (ps, cs) = surplus(&outcome(&[1.0, 1.2], &[1.0, 1.2], &[0.8, 0.8]));
        assert_eq!((ps, cs), (0.0, 0.0));
        let (ps, cs) = surplus(&outcome(&[1.0], &[0.9], &[0.8]));
        assert_abs_diff_eq!(ps, 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(cs, 0.01, epsilon = 1e-15);
    }

    #[test]
    fn welfare_identity() {
        let cfg = MarketConfig::symmetric(2, 0.5, 1.0, 3);
        let a = rollout(&open_loop_profile(&vec![vec![0.7, 0.8]; 3]), &cfg, None).unwrap();
        let w = welfare_difference(&a, &a).unwrap();
        assert_eq!((w.delta_ps, w.delta_cs, w.delta_w), (0.0, 0.0, 0.0));
        let sum: f64 = w.producer_surplus.iter().sum::<f64>() + w.consumer_surplus.iter().sum::<f64>();
        assert_abs_diff_eq!(w.total_welfare, sum, epsilon = 1e-15);
        let short = rollout(
            &open_loop_profile(&vec![vec![0.7, 0.8]; 2]),
            &MarketConfig::symmetric(2, 0.5, 1.0, 2),
            None,
        )
        .unwrap();
        assert!(matches!(welfare_difference(&a, &short), Err(Error::ConfigMismatch(_))));
    }

    #[test]
    fn regimes() {
        assert_eq!(classify_exits(3, &[2]), RegimeLabel::Predation);
        assert_eq!(classify_exits(3, &[]), RegimeLabel::Competition);
        assert_eq!(classify_exits(3, &[0]), RegimeLabel::Marginalization);
        assert_eq!(classify_exits(3, &[1, 2]), RegimeLabel::Dominance);
        assert_eq!(classify_exits(3, &[0, 1]), RegimeLabel::Other);
        assert_eq!(classify_exits(1, &[]), RegimeLabel::Competition);
    }

    #[test]
    fn majority_vote() {
        use RegimeLabel::*;
        assert_eq!(aggregate_regime(&[Predation, Predation, Competition]).unwrap(), Predation);
        assert_eq!(aggregate_regime(&[Competition]).unwrap(), Competition);
        assert_eq!(aggregate_regime(&[Dominance, Predation]).unwrap(), Dominance);
        assert_eq!(aggregate_regime(&[Marginalization, Competition]).unwrap(), Competition);
        assert!(matches!(aggregate_regime(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn label_round_trip() {
        for l in RegimeLabel::ALL {
            assert_eq!(l.as_str().parse::<RegimeLabel>().unwrap(), l);
        }
    }
}
