use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qosmw_sim::config::{Mode, ScenarioConfig};
use qosmw_sim::report::{compare, parse_csv, Thresholds};
use qosmw_sim::{calibrate, run_scenario};

/// Vehicular QoS middleware scenario simulator.
#[derive(Parser)]
#[command(name = "qosmw", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write the per-window metrics CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's mode.
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the manager's audit log (empty in baseline mode).
        #[arg(long)]
        audit: Option<PathBuf>,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a scenario config.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fit the radio bandwidth so the stage-1 baseline RTT hits a target.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        target_rtt: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a baseline and an adaptive run of the same scenario.
    Compare {
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        adaptive: PathBuf,
        /// Expected stage-1 baseline RTT.
        #[arg(long, default_value_t = 0.5)]
        target_rtt: f64,
    },
}

enum Failure {
    Config(String),
    Check,
}

impl From<String> for Failure {
    fn from(msg: String) -> Self {
        Failure::Config(msg)
    }
}

fn write(path: &Path, text: &str) -> Result<(), String> {
    fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run {
            config,
            mode,
            out,
            audit,
            seed,
        } => {
            let mut cfg = ScenarioConfig::load(&config).map_err(|e| e.to_string())?;
            if let Some(mode) = mode {
                cfg.mode = mode;
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let output = run_scenario(&cfg).map_err(|e| e.to_string())?;
            write(&out, &output.metrics.to_csv())?;
            if let Some(audit) = audit {
                write(&audit, &output.audit_jsonl())?;
            }
            println!(
                "{} requests, {} failed, {} windows -> {}",
                output.requests.len(),
                output.failed_requests(),
                output.metrics.windows.len(),
                out.display()
            );
        }
        Command::Validate { config } => {
            ScenarioConfig::load(&config).map_err(|e| e.to_string())?;
            println!("OK");
        }
        Command::Calibrate {
            config,
            target_rtt,
            out,
        } => {
            let cfg = ScenarioConfig::load(&config).map_err(|e| e.to_string())?;
            let fitted = calibrate(target_rtt, &cfg).map_err(|e| e.to_string())?;
            write(&out, &fitted.to_json())?;
            let bw = fitted
                .topology
                .links
                .iter()
                .find(|l| l.radio)
                .map(|l| l.bandwidth_bps)
                .unwrap_or_default();
            println!("radio bandwidth {bw:.3} bps -> {}", out.display());
        }
        Command::Compare {
            baseline,
            adaptive,
            target_rtt,
        } => {
            let b = parse_csv(&read(&baseline)?).map_err(|e| format!("{}: {e}", baseline.display()))?;
            let a = parse_csv(&read(&adaptive)?).map_err(|e| format!("{}: {e}", adaptive.display()))?;
            let th = Thresholds {
                target_rtt_s: target_rtt,
                ..Thresholds::default()
            };
            let c = compare(b, a, th)?;
            print!("{}", c.render());
            if !c.passed() {
                return Err(Failure::Check);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Check) => ExitCode::from(2),
    }
}
