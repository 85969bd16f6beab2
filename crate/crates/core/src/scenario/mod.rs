//! Scenario configuration, truth and filter co-simulation, Monte Carlo
//! campaigns, metrics and artifacts.

pub mod artifacts;
pub mod config;
pub mod metrics;
pub mod record;
pub mod runner;

pub use config::{Mode, Preset, ScenarioConfig};
pub use metrics::{compute_rmse, consistency_report, CampaignSummary};
pub use record::{RunRecord, StepSample};
pub use runner::{compare_strategies, run_monte_carlo, run_single, Campaign};
