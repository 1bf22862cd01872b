//! Experiment harness around the `dce` crate: scenario configs, the runner
//! that compares estimates against simulator ground truth, and CSV outputs.

pub mod config;
pub mod scenario;

pub use config::{ConfigError, ScenarioConfig, SenderMode, SweepConfig};
pub use scenario::{
    regression_slope, run_scenario, sweep, ResultRow, ScenarioError, ScenarioOutcome,
    SweepOutcome,
};

/// The stock two-level scenario shipped with the workbench: 100 Mbit/s
/// links, two receivers behind two routers, one background flow across each
/// shared hop, and deliberately skewed clocks.
pub fn default_scenario_toml() -> &'static str {
    include_str!("../scenarios/default.toml")
}

/// Load-and-size sweep over the stock topology.
pub fn default_sweep_toml() -> &'static str {
    include_str!("../scenarios/sweep.toml")
}
