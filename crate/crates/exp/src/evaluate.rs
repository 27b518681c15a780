//! Everything measured about one extracted profile.

use oligopoly::metrics::predation_records;
use oligopoly::verify::VerifyOptions;
use oligopoly::{
    analytic_baseline, classify_regime, rollout, verify_profile, MarketConfig, PredationRecord,
    RegimeLabel, StrategyProfile, Trajectory, VerificationReport, WelfareRecord,
};

use crate::error::Result;

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub trajectory: Trajectory<f64>,
    /// Play of the analytic no-dropout equilibrium of the same information
    /// setting.
    pub baseline: Trajectory<f64>,
    pub predation: Vec<PredationRecord<f64>>,
    pub welfare: WelfareRecord<f64>,
    pub report: VerificationReport<f64>,
    pub regime: RegimeLabel,
}

impl Evaluation {
    /// `agent:stage` for every exit, in order.
    pub fn exits(&self) -> String {
        self.trajectory
            .outcomes
            .iter()
            .flat_map(|o| o.exits.iter().map(move |a| format!("{a}:{}", o.stage)))
            .collect::<Vec<_>>()
            .join(";")
    }

    pub fn loss(&self, agent: usize) -> f64 {
        self.report.agents[agent].loss
    }
}

/// Rolls out a deterministic profile, verifies it and compares it with the
/// no-dropout analytic equilibrium.
pub fn evaluate(
    profile: &StrategyProfile<f64>,
    config: &MarketConfig<f64>,
    verify: &VerifyOptions,
) -> Result<Evaluation> {
    let trajectory = rollout(profile, config, None)?;
    let base_config = config.clone().with_dropouts(false);
    let baseline = rollout(&analytic_baseline(&base_config)?, &base_config, None)?;
    let predation = predation_records(&trajectory, &baseline)?;
    let welfare = oligopoly::welfare_difference(&trajectory, &baseline)?;
    let report = verify_profile(profile, verify, config)?;
    let regime = classify_regime(&trajectory);
    Ok(Evaluation { trajectory, baseline, predation, welfare, report, regime })
}
