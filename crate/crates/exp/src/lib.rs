//! Experiment layer for the oligopoly crate: TOML configs, the cost sweep
//! with resumable result tables, and SVG figures.

pub mod config;
pub mod error;
pub mod evaluate;
pub mod figures;
pub mod profile_io;
pub mod results;
pub mod sweep;

pub use config::{ExperimentConfig, TrainOverrides, VerifySettings};
pub use error::{ExpError, Result};
pub use evaluate::{evaluate, Evaluation};
pub use figures::{emit_figures, emit_strategy_plot, follows_regime_order, regime_by_cost};
pub use results::{read_results, ResultRow};
pub use sweep::{run_sweep, Cell, SweepSpec, SweepSummary};
