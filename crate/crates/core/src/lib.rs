//! Finite-horizon dynamic oligopoly with demand inertia and firm dropouts.
//!
//! Firms set prices for `T` stages. A firm pricing below the market mean
//! gains demand intercept in the next stage, one pricing above loses it, and
//! a firm whose intercept would fall below its unit cost leaves the market,
//! its customers redistributed among the survivors.
//!
//! The crate provides the market itself ([`market`]), analytical equilibria
//! of the game without exits ([`analytic`]), self-play policy-gradient
//! training ([`learn`]), exhaustive best-response verification on a price
//! grid ([`verify`]) and predation and welfare measures ([`metrics`]).
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the usual choice of `f64` for markets and solvers.

pub mod analytic;
pub mod error;
pub mod learn;
pub mod linalg;
pub mod market;
pub mod metrics;
pub mod policy;
pub mod scalar;
pub mod seed;
pub mod verify;

pub use analytic::{
    analytic_baseline, check_second_order, solve_feedback_ne, solve_open_loop_bounded,
    solve_open_loop_multistart, solve_open_loop_ne, LinearFeedbackEquilibrium, NewtonOptions, OpenLoopEquilibrium,
    SecondOrderReport,
};
pub use error::{Error, Result};
pub use learn::{train_selfplay, Algorithm, LearnedProfile, TrainConfig};
pub use market::{
    apply_dropouts, observe, rollout, step, Information, MarketConfig, MarketState, Observation,
    Policy, StageOutcome, StrategyProfile, Trajectory,
};
pub use metrics::{
    aggregate_regime, classify_regime, predatory_incentive, surplus, welfare_difference,
    PredationRecord, RegimeLabel, WelfareRecord,
};
pub use scalar::Scalar;
pub use seed::mix_seed;
pub use verify::{best_response_value, verify_profile, VerificationReport, VerifyOptions};

pub type Config = MarketConfig<f64>;
pub type State = MarketState<f64>;
pub type Profile = StrategyProfile<f64>;
pub type Run = Trajectory<f64>;
pub type Report = VerificationReport<f64>;
/// Trained networks in single precision, the default for training.
pub type Learned = LearnedProfile<f32>;
