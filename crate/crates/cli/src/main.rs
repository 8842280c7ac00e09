//! `tdsim`: run co-simulation scenarios, validate scenario files, solve a
//! single network.
//!
//! Exit status is 0 on success, 1 for usage and validation errors and 2 when
//! a run or solve fails.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use tdsim_core::federation::ClockMode;
use tdsim_core::grid::{parse_grid_file, BusKind, ParseMode};
use tdsim_core::orchestrator::{load_scenario, run_scenario, write_outputs, RunOptions};
use tdsim_core::powerflow::{balanced_head, solve_feeder, solve_transmission, FeederInjections};
use tdsim_core::Phase;

#[derive(Parser)]
#[command(name = "tdsim", version, about = "Transmission/distribution Volt-VAR co-simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Sim,
    Realtime,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Auto,
    Feeder,
    Transmission,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write telemetry.csv, events.csv and summary.txt.
    Run {
        scenario: PathBuf,
        /// Clock mode; defaults to the scenario's.
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Link seed; defaults to the scenario's.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check that a scenario and every file it references parse.
    Validate { scenario: PathBuf },
    /// Solve one network file and print bus voltages.
    Powerflow {
        grid: PathBuf,
        /// Feeder (radial sweep) or transmission (Newton-Raphson). `auto`
        /// picks transmission when the file declares generators.
        #[arg(long, value_enum, default_value = "auto")]
        kind: Kind,
        /// Feeder head voltage magnitude, p.u.
        #[arg(long, default_value_t = 1.0)]
        head: f64,
    },
}

/// Failure classes mapped to exit codes.
enum Failure {
    Invalid(anyhow::Error),
    Runtime(anyhow::Error),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(text) => match std::io::stdout().lock().write_all(text.as_bytes()) {
            // a closed pipe (`tdsim ... | head`) is not a failure
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
            _ => ExitCode::SUCCESS,
        },
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {}", report(&e));
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {}", report(&e));
            ExitCode::from(2)
        }
    }
}

/// The error chain joined by `: `, skipping causes (or a leading `path: `)
/// that an outer message already spells out.
fn report(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let mut text = cause.to_string();
        if out.contains(&text) {
            continue;
        }
        if let Some((head, rest)) = text.split_once(": ") {
            if out.contains(head) {
                text = rest.to_string();
            }
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out
}

fn dispatch(cmd: Command) -> Result<String, Failure> {
    match cmd {
        Command::Run { scenario, mode, seed, out } => run(&scenario, mode, seed, &out),
        Command::Validate { scenario } => validate(&scenario),
        Command::Powerflow { grid, kind, head } => powerflow(&grid, kind, head),
    }
}

fn run(path: &Path, mode: Option<Mode>, seed: Option<u64>, out: &Path) -> Result<String, Failure> {
    let spec = load_scenario(path).with_context(|| format!("cannot load {}", path.display())).map_err(Failure::Invalid)?;
    let mut opts = RunOptions::from_spec(&spec);
    if let Some(m) = mode {
        opts.mode = match m {
            Mode::Sim => ClockMode::Simulated,
            Mode::Realtime => ClockMode::Realtime,
        };
    }
    if let Some(s) = seed {
        opts.seed = s;
    }
    let output = run_scenario(&spec, opts).context("run failed").map_err(Failure::Runtime)?;
    write_outputs(out, &output).context("writing outputs").map_err(Failure::Runtime)?;
    Ok(format!("{}outputs written to {}\n", output.summary, out.display()))
}

fn validate(path: &Path) -> Result<String, Failure> {
    let spec = load_scenario(path).with_context(|| format!("cannot load {}", path.display())).map_err(Failure::Invalid)?;
    Ok(format!(
        "ok: {} feeder(s), {} transmission bus(es), boundary bus {}, {} fault window(s), {} h\n",
        spec.feeders.len(),
        spec.transmission.buses.len(),
        spec.boundary_bus,
        spec.faults.len(),
        spec.run.duration_h
    ))
}

fn powerflow(path: &Path, kind: Kind, head: f64) -> Result<String, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Invalid)?;
    let meshed = parse_grid_file(&text, ParseMode::Meshed)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(Failure::Invalid)?;
    let transmission = match kind {
        Kind::Auto => !meshed.generators.is_empty(),
        Kind::Feeder => false,
        Kind::Transmission => true,
    };
    if transmission {
        let sol = solve_transmission(&meshed, &[]).context("Newton-Raphson").map_err(Failure::Runtime)?;
        let mut out = String::from("bus,kind,v_mag_pu,v_angle_deg\n");
        for (i, b) in meshed.buses.iter().enumerate() {
            let kind = match sol.kinds[i] {
                BusKind::Slack => "slack",
                BusKind::Pv => "pv",
                BusKind::Pq => "pq",
            };
            let _ = writeln!(out, "{},{},{:.6},{:.6}", b.id, kind, sol.magnitude(i), sol.angle_deg(i));
        }
        let _ = writeln!(out, "iterations: {}", sol.state.iterations);
        return Ok(out);
    }
    let model = parse_grid_file(&text, ParseMode::Radial)
        .with_context(|| format!("parsing {} as a radial feeder", path.display()))
        .map_err(Failure::Invalid)?;
    let state = solve_feeder(&model, &balanced_head(head, 0.0), &FeederInjections::default())
        .context("sweep")
        .map_err(Failure::Runtime)?;
    if !state.converged {
        return Err(Failure::Runtime(anyhow::anyhow!("sweep did not converge in {} iterations", state.iterations)));
    }
    let mut out = String::from("bus,phase,v_mag_pu,v_angle_deg\n");
    for (i, b) in model.buses.iter().enumerate() {
        for p in Phase::ALL {
            if let Some(v) = state.voltage(i, p) {
                let _ = writeln!(out, "{},{},{:.6},{:.6}", b.id, p.as_char(), v.norm(), v.arg().to_degrees());
            }
        }
    }
    let _ = writeln!(out, "iterations: {}", state.iterations);
    Ok(out)
}
