//! Scenario execution: wire a config into the simulator, run the passive
//! driver, and judge the estimates against the simulator's ground truth.

use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

use dce::estimator::{self, EstimatorError};
use dce::id::NodeId;
use dce::netsim::{
    self, ClockSpec, PoissonSourceSpec, SimError, SimOutput, Simulator, TopologyError,
    TreeTopology,
};
use dce::passive::{drive, DriveConfig, PassiveError, ScheduleState};
use dce::timing::{self, TimingError, TimingRecord};

use crate::config::ScenarioConfig;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("topology: {0}")]
    Topology(#[from] TopologyError),
    #[error("simulation: {0}")]
    Sim(#[from] SimError),
    #[error("schedule: {0}")]
    Passive(#[from] PassiveError),
    #[error("timing: {0}")]
    Timing(#[from] TimingError),
    #[error("estimation: {0}")]
    Estimator(#[from] EstimatorError),
    #[error("pair {pair}: {n_used} usable samples, configured minimum is {min}")]
    InsufficientSamples {
        pair: String,
        n_used: usize,
        min: usize,
    },
    #[error("pair {pair}: trace rows do not align with the timing record")]
    TruthMismatch { pair: String },
}

/// One pair's results for one scenario. Covariances are ns²; the relative
/// error is defined only when the true shared-path variance is positive.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub scenario_id: String,
    pub pair: String,
    pub n_used: usize,
    pub dce_cov_ns2: f64,
    pub true_shared_var_ns2: f64,
    pub direct_cov_ns2: f64,
    pub rel_error: Option<f64>,
    pub mean_delay_a_ns: f64,
    pub mean_delay_b_ns: f64,
    pub mean_shared_ns: f64,
}

/// Per-sample true delays of one pair (the delay time-series export).
#[derive(Debug, Clone, Copy)]
pub struct DelaySeriesRow {
    pub k: u64,
    pub d_a_ns: i64,
    pub d_b_ns: i64,
    pub d_shared_ns: i64,
}

pub struct ScenarioOutcome {
    pub config: ScenarioConfig,
    pub rows: Vec<ResultRow>,
    pub delay_series: Vec<(String, Vec<DelaySeriesRow>)>,
    pub trace_csv: Option<Vec<u8>>,
    pub serials_sent: u64,
    pub rounds_used: usize,
}

/// Mixes a stream index into the scenario seed (splitmix64 finalizer), so
/// background sources and the jitter draw get independent, reproducible
/// streams from the one configured seed.
fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn as_f64(values: &[i64]) -> Vec<f64> {
    values.iter().map(|&v| v as f64).collect()
}

/// Build, run and evaluate one scenario.
pub fn run_scenario(
    cfg: &ScenarioConfig,
    collect_trace: bool,
) -> Result<ScenarioOutcome, ScenarioError> {
    let topo = TreeTopology::build(&cfg.topology)?;
    let receivers: Vec<NodeId> = topo.receivers().to_vec();
    let mut sim = Simulator::new(topo);

    for (name, clock) in &cfg.clocks {
        let node = sim
            .topology()
            .node_by_name(name)
            .expect("validated clock node exists");
        sim.set_clock(
            node,
            ClockSpec {
                offset_ns: clock.offset_ns,
                drift_ppm: clock.drift_ppm,
            },
        );
    }
    for (i, flow) in cfg.bg_flows.iter().enumerate() {
        let host = sim
            .topology()
            .node_by_name(&flow.from)
            .expect("validated flow source exists");
        let sink = sim
            .topology()
            .node_by_name(&flow.to)
            .expect("validated flow sink exists");
        sim.add_poisson_source(PoissonSourceSpec {
            host,
            sink,
            rate_bytes_per_sec: cfg.bg_rate_bytes_per_sec,
            packet_size: cfg.bg_packet_size,
            seed: derive_seed(cfg.seed, i as u64),
        });
    }

    let mut state = ScheduleState::new(receivers.len(), cfg.tau)?;
    let start_at = cfg.delta_ns;
    let mut max_serials = (state.planned_rounds() as u64 * cfg.tau) * 2 + 64;
    if let Some(horizon) = cfg.horizon_ns {
        let budget = ((horizon - start_at) / cfg.delta_ns).max(0) as u64;
        max_serials = max_serials.min(budget);
    }
    let drive_cfg = DriveConfig {
        receivers,
        packet_size: cfg.packet_size,
        delta_ns: cfg.delta_ns,
        start_at_ns: start_at,
        max_serials,
        sender_jitter_ns: cfg.effective_jitter_ns(),
        jitter_seed: derive_seed(cfg.seed, 0xA11CE),
    };
    let outcome = drive(&mut sim, &mut state, &drive_cfg)?;
    let output = sim.into_output();

    let mut rows = Vec::new();
    let mut delay_series = Vec::new();
    for record in &outcome.records {
        let (row, series) = evaluate_pair(cfg, &output, record)?;
        rows.push(row);
        delay_series.push(series);
    }
    let trace_csv = if collect_trace {
        let mut buf = Vec::new();
        netsim::write_trace_csv(&output, &mut buf).expect("writing to memory succeeds");
        Some(buf)
    } else {
        None
    };
    Ok(ScenarioOutcome {
        config: cfg.clone(),
        rows,
        delay_series,
        trace_csv,
        serials_sent: outcome.serials_sent,
        rounds_used: outcome.rounds_used,
    })
}

fn evaluate_pair(
    cfg: &ScenarioConfig,
    output: &SimOutput,
    record: &TimingRecord,
) -> Result<(ResultRow, (String, Vec<DelaySeriesRow>)), ScenarioError> {
    let pair = record.pair_id;
    let pair_name = format!(
        "{}-{}",
        output.topology.name(pair.lo()),
        output.topology.name(pair.hi())
    );
    let truth = output.truth_rows(pair);
    if truth.len() != record.sample_count() + 1 {
        return Err(ScenarioError::TruthMismatch { pair: pair_name });
    }

    let series = timing::build_relative_series(record)?;
    // Baseline row 0 never enters the estimator; truth columns align with
    // the detrended indices k = 1..n.
    let d_lo: Vec<i64> = truth[1..].iter().map(|t| t.delay_lo_ns).collect();
    let d_hi: Vec<i64> = truth[1..].iter().map(|t| t.delay_hi_ns).collect();
    let shared: Vec<i64> = truth[1..].iter().map(|t| t.shared_lo_ns).collect();

    let (kept, kept_indices) = if cfg.filter_enabled {
        let (filtered, report) =
            estimator::filter_outliers(&series, Some((&d_lo, &d_hi)), cfg.filter_multiplier)?;
        let kept_indices: Vec<usize> = (1..=series.len())
            .filter(|k| !report.removed_indices.contains(k))
            .collect();
        (filtered, kept_indices)
    } else {
        (series.clone(), (1..=series.len()).collect())
    };

    let n_used = kept.len();
    if n_used < cfg.min_samples {
        return Err(ScenarioError::InsufficientSamples {
            pair: pair_name,
            n_used,
            min: cfg.min_samples,
        });
    }

    let surv_lo: Vec<i64> = kept_indices.iter().map(|&k| d_lo[k - 1]).collect();
    let surv_hi: Vec<i64> = kept_indices.iter().map(|&k| d_hi[k - 1]).collect();
    let surv_shared: Vec<f64> = kept_indices.iter().map(|&k| shared[k - 1] as f64).collect();

    let dce_cov_ns2 = estimator::sample_covariance(&as_f64(&kept.values_a), &as_f64(&kept.values_b))?;
    let direct_cov_ns2 = estimator::direct_covariance(&surv_lo, &surv_hi)?;
    let true_shared_var_ns2 = estimator::sample_covariance(&surv_shared, &surv_shared)?;
    let rel_error = (true_shared_var_ns2 > 0.0)
        .then(|| (dce_cov_ns2 - true_shared_var_ns2).abs() / true_shared_var_ns2);

    let mean = |get: &dyn Fn(&netsim::TruthRow) -> i64| -> f64 {
        truth.iter().map(|t| get(t) as f64).sum::<f64>() / truth.len() as f64
    };
    let row = ResultRow {
        scenario_id: cfg.id.clone(),
        pair: pair_name.clone(),
        n_used,
        dce_cov_ns2,
        true_shared_var_ns2,
        direct_cov_ns2,
        rel_error,
        mean_delay_a_ns: mean(&|t| t.delay_lo_ns),
        mean_delay_b_ns: mean(&|t| t.delay_hi_ns),
        mean_shared_ns: mean(&|t| t.shared_lo_ns),
    };
    let series_rows: Vec<DelaySeriesRow> = truth
        .iter()
        .map(|t| DelaySeriesRow {
            k: t.k,
            d_a_ns: t.delay_lo_ns,
            d_b_ns: t.delay_hi_ns,
            d_shared_ns: t.shared_lo_ns,
        })
        .collect();
    Ok((row, (pair_name, series_rows)))
}

/// Run a batch of scenarios concurrently (independent simulator instances);
/// results come back in input order.
pub fn sweep(configs: &[ScenarioConfig]) -> SweepOutcome {
    let scenarios: Vec<(ScenarioConfig, Result<ScenarioOutcome, ScenarioError>)> = configs
        .par_iter()
        .map(|cfg| (cfg.clone(), run_scenario(cfg, false)))
        .collect();
    SweepOutcome { scenarios }
}

pub struct SweepOutcome {
    pub scenarios: Vec<(ScenarioConfig, Result<ScenarioOutcome, ScenarioError>)>,
}

impl SweepOutcome {
    pub fn all_ok(&self) -> bool {
        self.scenarios.iter().all(|(_, r)| r.is_ok())
    }

    pub fn ok_rows(&self) -> impl Iterator<Item = (&ScenarioConfig, &ResultRow)> {
        self.scenarios
            .iter()
            .filter_map(|(cfg, r)| r.as_ref().ok().map(|o| (cfg, o)))
            .flat_map(|(cfg, o)| o.rows.iter().map(move |row| (cfg, row)))
    }

    pub fn failures(&self) -> Vec<(String, String)> {
        self.scenarios
            .iter()
            .filter_map(|(cfg, r)| {
                r.as_ref()
                    .err()
                    .map(|e| (cfg.id.clone(), e.to_string()))
            })
            .collect()
    }

    pub fn results_csv(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        write_results_csv(self.ok_rows().map(|(_, r)| r), &mut buf).expect("memory write");
        buf
    }

    /// Estimate-vs-truth scatter columns.
    pub fn estimate_vs_truth_csv(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        writeln!(
            buf,
            "scenario_id,pair,bg_rate_bytes_per_sec,packet_size,dce_cov_ns2,true_shared_var_ns2"
        )
        .unwrap();
        for (cfg, row) in self.ok_rows() {
            writeln!(
                buf,
                "{},{},{},{},{},{}",
                row.scenario_id,
                row.pair,
                cfg.bg_rate_bytes_per_sec,
                cfg.packet_size,
                row.dce_cov_ns2,
                row.true_shared_var_ns2
            )
            .unwrap();
        }
        buf
    }

    /// Error-vs-load columns.
    pub fn error_vs_load_csv(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        writeln!(
            buf,
            "scenario_id,pair,bg_rate_bytes_per_sec,packet_size,rel_error"
        )
        .unwrap();
        for (cfg, row) in self.ok_rows() {
            let rel = row
                .rel_error
                .map(|e| e.to_string())
                .unwrap_or_default();
            writeln!(
                buf,
                "{},{},{},{},{}",
                row.scenario_id, row.pair, cfg.bg_rate_bytes_per_sec, cfg.packet_size, rel
            )
            .unwrap();
        }
        buf
    }

    /// Human-facing summary; covariances in ms², delays in ms.
    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<24} {:<8} {:>6} {:>14} {:>14} {:>9} {:>8} {:>8} {:>8}\n",
            "scenario", "pair", "n", "dce_ms2", "true_ms2", "rel_err", "d_a_ms", "d_b_ms", "d_s_ms"
        ));
        for (_, row) in self.ok_rows() {
            let to_ms2 = 1e-12;
            let rel = row
                .rel_error
                .map(|e| format!("{:.3}%", e * 100.0))
                .unwrap_or_else(|| "undef".into());
            out.push_str(&format!(
                "{:<24} {:<8} {:>6} {:>14.6} {:>14.6} {:>9} {:>8.4} {:>8.4} {:>8.4}\n",
                row.scenario_id,
                row.pair,
                row.n_used,
                row.dce_cov_ns2 * to_ms2,
                row.true_shared_var_ns2 * to_ms2,
                rel,
                row.mean_delay_a_ns * 1e-6,
                row.mean_delay_b_ns * 1e-6,
                row.mean_shared_ns * 1e-6,
            ));
        }
        for (id, err) in self.failures() {
            out.push_str(&format!("{id:<24} FAILED: {err}\n"));
        }
        out
    }
}

pub fn write_results_csv<'a, W: Write>(
    rows: impl Iterator<Item = &'a ResultRow>,
    w: &mut W,
) -> std::io::Result<()> {
    writeln!(
        w,
        "scenario_id,pair,n_used,dce_cov_ns2,true_shared_var_ns2,direct_cov_ns2,rel_error,\
         mean_delay_a_ns,mean_delay_b_ns,mean_shared_ns"
    )?;
    for row in rows {
        let rel = row.rel_error.map(|e| e.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            row.scenario_id,
            row.pair,
            row.n_used,
            row.dce_cov_ns2,
            row.true_shared_var_ns2,
            row.direct_cov_ns2,
            rel,
            row.mean_delay_a_ns,
            row.mean_delay_b_ns,
            row.mean_shared_ns
        )?;
    }
    Ok(())
}

/// Per-sample delay time series (one file per run, pairs stacked).
pub fn write_delay_series_csv<W: Write>(
    series: &[(String, Vec<DelaySeriesRow>)],
    w: &mut W,
) -> std::io::Result<()> {
    writeln!(w, "pair,k,d_a_ns,d_b_ns,d_shared_ns")?;
    for (pair, rows) in series {
        for row in rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                pair, row.k, row.d_a_ns, row.d_b_ns, row.d_shared_ns
            )?;
        }
    }
    Ok(())
}

/// Ordinary least-squares slope of y on x.
pub fn regression_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for &(x, y) in points {
        num += (x - mean_x) * (y - mean_y);
        den += (x - mean_x) * (x - mean_x);
    }
    num / den
}
