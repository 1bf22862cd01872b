//! Command-line entry point.
//!
//! Exit codes: 0 on success, 1 when a scenario fails at runtime, 2 on
//! configuration errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dce::passive::{write_schedule_csv, ScheduleState};
use dce_harness::config::{ConfigError, ScenarioConfig, SweepConfig};
use dce_harness::scenario::{self, write_delay_series_csv, write_results_csv};

#[derive(Parser)]
#[command(name = "dce", about = "Delay-correlation measurement workbench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single scenario and write results.csv (plus optional traces).
    Run {
        /// Scenario config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the full packet trace (trace.csv) and the per-sample
        /// delay series (delay_series.csv).
        #[arg(long)]
        trace: bool,
    },
    /// Run a scenario matrix and write results.csv, fig6.csv and fig7.csv.
    Sweep {
        /// Sweep config (TOML) with [base] and [sweep] tables.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Validate a scenario config and echo the normalized form.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Dump the passive rotation plan for N hosts as CSV.
    Schedule {
        #[arg(long)]
        hosts: usize,
        #[arg(long, default_value_t = 1550)]
        tau: u64,
    },
}

fn read_config(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

fn write_out(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), String> {
    fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn config_failure(err: impl std::fmt::Display) -> ExitCode {
    eprintln!("{err}");
    ExitCode::from(2)
}

fn scenario_failure(err: impl std::fmt::Display) -> ExitCode {
    eprintln!("{err}");
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            trace,
        } => {
            let text = match read_config(&config) {
                Ok(t) => t,
                Err(e) => return config_failure(e),
            };
            let mut cfg = match ScenarioConfig::from_toml(&text) {
                Ok(c) => c,
                Err(e) => return config_failure(e),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let outcome = match scenario::run_scenario(&cfg, trace) {
                Ok(o) => o,
                Err(e) => return scenario_failure(format!("scenario '{}': {e}", cfg.id)),
            };
            let mut results = Vec::new();
            write_results_csv(outcome.rows.iter(), &mut results).expect("memory write");
            let norm = cfg.normalized_toml();
            if let Err(e) = write_out(&out, "results.csv", &results)
                .and_then(|_| write_out(&out, "config_normalized.toml", norm.as_bytes()))
            {
                return scenario_failure(e);
            }
            if trace {
                let mut series = Vec::new();
                write_delay_series_csv(&outcome.delay_series, &mut series).expect("memory write");
                let trace_bytes = outcome.trace_csv.as_deref().unwrap_or_default();
                if let Err(e) = write_out(&out, "delay_series.csv", &series)
                    .and_then(|_| write_out(&out, "trace.csv", trace_bytes))
                {
                    return scenario_failure(e);
                }
            }
            let single = scenario::SweepOutcome {
                scenarios: vec![(cfg, Ok(outcome))],
            };
            print!("{}", single.summary_table());
            ExitCode::SUCCESS
        }
        Command::Sweep { config, out, seed } => {
            let text = match read_config(&config) {
                Ok(t) => t,
                Err(e) => return config_failure(e),
            };
            let mut sweep_cfg = match SweepConfig::from_toml(&text) {
                Ok(c) => c,
                Err(e) => return config_failure(e),
            };
            if let Some(s) = seed {
                sweep_cfg.base.seed = s;
            }
            let configs = sweep_cfg.expand();
            let outcome = scenario::sweep(&configs);
            let norm = toml::to_string_pretty(&sweep_cfg).expect("config serializes");
            if let Err(e) = write_out(&out, "results.csv", &outcome.results_csv())
                .and_then(|_| write_out(&out, "fig6.csv", &outcome.estimate_vs_truth_csv()))
                .and_then(|_| write_out(&out, "fig7.csv", &outcome.error_vs_load_csv()))
                .and_then(|_| write_out(&out, "config_normalized.toml", norm.as_bytes()))
            {
                return scenario_failure(e);
            }
            print!("{}", outcome.summary_table());
            if outcome.all_ok() {
                ExitCode::SUCCESS
            } else {
                scenario_failure(format!(
                    "{} of {} scenarios failed",
                    outcome.failures().len(),
                    configs.len()
                ))
            }
        }
        Command::Validate { config } => {
            let text = match read_config(&config) {
                Ok(t) => t,
                Err(e) => return config_failure(e),
            };
            match ScenarioConfig::from_toml(&text) {
                Ok(cfg) => {
                    print!("{}", cfg.normalized_toml());
                    ExitCode::SUCCESS
                }
                Err(e @ ConfigError::Parse(_)) => config_failure(e),
                Err(e @ ConfigError::Invalid(_)) => config_failure(e),
            }
        }
        Command::Schedule { hosts, tau } => {
            let state = match ScheduleState::new(hosts, tau) {
                Ok(s) => s,
                Err(e) => return config_failure(e),
            };
            let mut buf = Vec::new();
            write_schedule_csv(&state, &mut buf).expect("memory write");
            print!("{}", String::from_utf8(buf).expect("csv is utf-8"));
            ExitCode::SUCCESS
        }
    }
}
