//! Scenario configuration: schema, defaults, validation and the normalized
//! echo used by `validate`.
//!
//! Validation never hands back a partially usable config: either every rule
//! passes, or the full list of diagnostics is returned. Unknown keys are
//! rejected at parse time.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use dce::netsim::{TopologySpec, TreeTopology, MTU};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config:\n{}", .0.iter().map(|d| format!("  - {d}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<String>),
}

/// Sender emission pattern for the measurement serials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SenderMode {
    /// Constant inter-serial interval; records carry the interval.
    Constant,
    /// Jittered emission instants; records carry the per-serial stamps.
    Schedule,
}

impl fmt::Display for SenderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SenderMode::Constant => write!(f, "constant"),
            SenderMode::Schedule => write!(f, "schedule"),
        }
    }
}

/// One background flow between two topology nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BgFlow {
    pub from: String,
    pub to: String,
}

/// Per-node clock model knobs.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockEntry {
    #[serde(default)]
    pub offset_ns: i64,
    #[serde(default)]
    pub drift_ppm: i64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Reproducibility is mandatory; there is no default seed.
    pub seed: u64,
    #[serde(default = "defaults::id")]
    pub id: String,
    #[serde(default = "defaults::packet_size")]
    pub packet_size: u32,
    /// Gap between consecutive serials, ns.
    #[serde(default = "defaults::delta_ns")]
    pub delta_ns: i64,
    #[serde(default = "defaults::mode")]
    pub mode: SenderMode,
    /// Per-pair sample threshold.
    #[serde(default = "defaults::tau")]
    pub tau: u64,
    /// Mean throughput of each background flow, bytes per second.
    #[serde(default = "defaults::bg_rate")]
    pub bg_rate_bytes_per_sec: f64,
    #[serde(default = "defaults::bg_packet_size")]
    pub bg_packet_size: u32,
    #[serde(default = "defaults::filter_enabled")]
    pub filter_enabled: bool,
    #[serde(default = "defaults::filter_multiplier")]
    pub filter_multiplier: f64,
    /// Scenarios with fewer usable samples per pair fail loudly.
    #[serde(default = "defaults::min_samples")]
    pub min_samples: usize,
    /// Optional cap on total simulated time; derived from tau when absent.
    #[serde(default)]
    pub horizon_ns: Option<i64>,
    /// Jitter half-range in schedule mode; defaults to delta/4.
    #[serde(default)]
    pub sender_jitter_ns: Option<i64>,
    pub topology: TopologySpec,
    #[serde(default)]
    pub bg_flows: Vec<BgFlow>,
    #[serde(default)]
    pub clocks: BTreeMap<String, ClockEntry>,
}

mod defaults {
    use super::SenderMode;

    pub fn id() -> String {
        "scenario".into()
    }
    pub fn packet_size() -> u32 {
        800
    }
    pub fn delta_ns() -> i64 {
        2_000_000
    }
    pub fn mode() -> SenderMode {
        SenderMode::Constant
    }
    pub fn tau() -> u64 {
        1550
    }
    pub fn bg_rate() -> f64 {
        4_000_000.0
    }
    pub fn bg_packet_size() -> u32 {
        1000
    }
    pub fn filter_enabled() -> bool {
        true
    }
    pub fn filter_multiplier() -> f64 {
        2.0
    }
    pub fn min_samples() -> usize {
        100
    }
}

impl ScenarioConfig {
    /// Parse and fully validate; returns either a usable config or the
    /// complete list of problems.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let diags = cfg.diagnostics();
        if diags.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigError::Invalid(diags))
        }
    }

    /// All semantic problems with this config, empty when valid.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut diags = Vec::new();
        if self.packet_size == 0 {
            diags.push("packet_size must be positive".into());
        } else if self.packet_size > MTU {
            diags.push(format!("packet_size {} exceeds MTU {MTU}", self.packet_size));
        }
        if self.bg_packet_size == 0 {
            diags.push("bg_packet_size must be positive".into());
        } else if self.bg_packet_size > MTU {
            diags.push(format!(
                "bg_packet_size {} exceeds MTU {MTU}",
                self.bg_packet_size
            ));
        }
        if self.delta_ns <= 0 {
            diags.push(format!("delta_ns must be positive, got {}", self.delta_ns));
        }
        if self.tau == 0 {
            diags.push("tau must be at least 1".into());
        }
        if !(self.bg_rate_bytes_per_sec >= 0.0) || !self.bg_rate_bytes_per_sec.is_finite() {
            diags.push(format!(
                "bg_rate_bytes_per_sec must be finite and non-negative, got {}",
                self.bg_rate_bytes_per_sec
            ));
        }
        if self.filter_enabled && self.filter_multiplier <= 1.0 {
            diags.push(format!(
                "filter_multiplier must exceed 1, got {}",
                self.filter_multiplier
            ));
        }
        if self.min_samples < 2 {
            diags.push("min_samples must be at least 2".into());
        }
        if let Some(h) = self.horizon_ns {
            if h <= 0 {
                diags.push(format!("horizon_ns must be positive, got {h}"));
            }
        }
        if let Some(j) = self.sender_jitter_ns {
            if j < 0 || 2 * j >= self.delta_ns {
                diags.push(format!(
                    "sender_jitter_ns must be in [0, delta_ns/2), got {j}"
                ));
            }
        }
        match TreeTopology::build(&self.topology) {
            Ok(topo) => {
                for (i, flow) in self.bg_flows.iter().enumerate() {
                    if topo.node_by_name(&flow.from).is_none() {
                        diags.push(format!("bg_flows[{i}]: unknown node '{}'", flow.from));
                    }
                    if topo.node_by_name(&flow.to).is_none() {
                        diags.push(format!("bg_flows[{i}]: unknown node '{}'", flow.to));
                    }
                    if flow.from == flow.to {
                        diags.push(format!("bg_flows[{i}]: source and sink coincide"));
                    }
                }
                for name in self.clocks.keys() {
                    if topo.node_by_name(name).is_none() {
                        diags.push(format!("clocks: unknown node '{name}'"));
                    }
                }
            }
            Err(e) => diags.push(format!("topology: {e}")),
        }
        diags
    }

    /// Normalized dump with every default made explicit.
    pub fn normalized_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Effective jitter half-range: only in schedule mode, default delta/4.
    pub fn effective_jitter_ns(&self) -> Option<i64> {
        match self.mode {
            SenderMode::Constant => None,
            SenderMode::Schedule => Some(self.sender_jitter_ns.unwrap_or(self.delta_ns / 4)),
        }
    }
}

/// Sweep matrix over background rates and packet sizes, sharing one base
/// scenario (and its seed, so scenarios are comparable point by point).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: ScenarioConfig,
    pub sweep: SweepAxes,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    pub bg_rates_bytes_per_sec: Vec<f64>,
    pub packet_sizes: Vec<u32>,
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: SweepConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let mut diags = cfg.base.diagnostics();
        if cfg.sweep.bg_rates_bytes_per_sec.is_empty() {
            diags.push("sweep.bg_rates_bytes_per_sec must not be empty".into());
        }
        if cfg.sweep.packet_sizes.is_empty() {
            diags.push("sweep.packet_sizes must not be empty".into());
        }
        for &r in &cfg.sweep.bg_rates_bytes_per_sec {
            if !(r >= 0.0) || !r.is_finite() {
                diags.push(format!("sweep rate {r} must be finite and non-negative"));
            }
        }
        for &s in &cfg.sweep.packet_sizes {
            if s == 0 || s > MTU {
                diags.push(format!("sweep packet size {s} outside 1..={MTU}"));
            }
        }
        if diags.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigError::Invalid(diags))
        }
    }

    /// Expand the matrix into per-scenario configs, ids encoding the cell.
    pub fn expand(&self) -> Vec<ScenarioConfig> {
        let mut out = Vec::new();
        for &rate in &self.sweep.bg_rates_bytes_per_sec {
            for &size in &self.sweep.packet_sizes {
                let mut cfg = self.base.clone();
                cfg.bg_rate_bytes_per_sec = rate;
                cfg.packet_size = size;
                cfg.id = format!("bg{}_ps{}", rate as u64, size);
                out.push(cfg);
            }
        }
        out
    }
}
