//! `sma-grid`: run micro-grid scenarios, check feasibility, compare against
//! the fixed-step reference.
//!
//! Exit codes: 0 success or feasible, 1 infeasible (or oracle deviation out of
//! tolerance), 2 input error, 3 event guard tripped.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sma_grid::{
    check_feasibility, compare, load_scenario, run_fixed_step, run_with, RunOptions, Scenario, SimError, TieBreak,
    Timeline, DEFAULT_EVENT_CAP,
};

const EVENT_CAP_VAR: &str = "SMA_GRID_EVENT_CAP";

#[derive(Parser)]
#[command(
    name = "sma-grid",
    version,
    about = "Event-driven micro-grid energy management simulator"
)]
struct Cli {
    /// Resolve equal load priorities by ascending id instead of rejecting the scenario.
    #[arg(long, global = true, value_enum)]
    tie_break: Option<TieBreakArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TieBreakArg {
    Index,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write its timeline.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output file; `-` for standard output.
        #[arg(long, default_value = "-")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Print the feasibility verdict, deficiency intervals and deadline misses.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the fixed-step reference engine.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        /// Step size in hours.
        #[arg(long, allow_negative_numbers = true)]
        dt: f64,
        /// Run both engines and print their deviation instead of a timeline.
        #[arg(long)]
        compare: bool,
        #[arg(long, default_value = "-")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

enum Failure {
    Input(String),
    Guard(String),
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::NonTermination(_) => Failure::Guard(e.to_string()),
            SimError::ScenarioInvalid(_) | SimError::InvalidStep(_) => Failure::Input(e.to_string()),
            other => Failure::Guard(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Guard(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8, Failure> {
    let tie = cli.tie_break.map(|TieBreakArg::Index| TieBreak::Index);
    let opts = run_options()?;
    match cli.command {
        Command::Run { config, out, format } => {
            let scenario = load(&config, tie)?;
            let timeline = run_with(&scenario, &opts)?;
            emit(&timeline, &out, format)?;
            Ok(0)
        }
        Command::Check { config } => {
            let scenario = load(&config, tie)?;
            let timeline = run_with(&scenario, &opts)?;
            Ok(print_check(&timeline))
        }
        Command::Oracle {
            config,
            dt,
            compare: cmp,
            out,
            format,
        } => {
            if !(dt > 0.0) || !dt.is_finite() {
                return Err(Failure::Input(format!(
                    "--dt must be a positive number of hours, got {dt}"
                )));
            }
            let scenario = load(&config, tie)?;
            let fixed = run_fixed_step(&scenario, dt)?;
            if !cmp {
                emit(&fixed, &out, format)?;
                return Ok(0);
            }
            let exact = run_with(&scenario, &opts)?;
            let c = compare(&exact, &fixed, dt);
            println!("dt_h                      {}", c.dt);
            println!("same_completions          {}", c.same_completions);
            println!("order_consistent          {}", c.order_consistent);
            println!("max_completion_dev_h      {}", c.max_completion_deviation);
            println!(
                "deficiency_energy_kwh     {} (fixed {})",
                c.deficiency_energy_exact, c.deficiency_energy_fixed
            );
            println!("deficiency_energy_dev_kwh {}", c.deficiency_deviation());
            println!("final_soc_dev             {}", c.final_soc_deviation);
            let ok = c.within_tolerance();
            println!("{}", if ok { "WITHIN TOLERANCE" } else { "OUT OF TOLERANCE" });
            Ok(if ok { 0 } else { 1 })
        }
    }
}

fn run_options() -> Result<RunOptions, Failure> {
    let event_cap = match std::env::var(EVENT_CAP_VAR) {
        Ok(v) => v
            .trim()
            .parse::<u64>()
            .map_err(|_| Failure::Input(format!("{EVENT_CAP_VAR}={v:?} is not a non-negative integer")))?,
        Err(_) => DEFAULT_EVENT_CAP,
    };
    Ok(RunOptions { event_cap })
}

fn load(path: &Path, tie: Option<TieBreak>) -> Result<Scenario, Failure> {
    load_scenario(path, tie).map_err(|e| Failure::Input(e.to_string()))
}

fn emit(timeline: &Timeline, out: &Path, format: Format) -> Result<(), Failure> {
    let sink: Box<dyn Write> = if out == Path::new("-") {
        Box::new(io::stdout().lock())
    } else {
        let f = File::create(out).map_err(|e| Failure::Input(format!("{}: {e}", out.display())))?;
        Box::new(f)
    };
    let mut w = BufWriter::new(sink);
    let written = match format {
        Format::Csv => timeline.write_csv(&mut w).map_err(|e| e.to_string()),
        Format::Json => serde_json::to_writer_pretty(&mut w, timeline).map_err(|e| e.to_string()),
    };
    written
        .and_then(|()| w.flush().map_err(|e| e.to_string()))
        .map_err(|e| Failure::Input(format!("{}: {e}", out.display())))
}

fn print_check(timeline: &Timeline) -> u8 {
    let report = check_feasibility(timeline);
    let misses = &timeline.summary.deadline_misses;
    let feasible = report.feasible && misses.is_empty();
    println!("{}", if feasible { "FEASIBLE" } else { "INFEASIBLE" });
    println!("horizon_h {} {}", timeline.horizon.0, timeline.horizon.1);
    if let Some(t) = report.first_violation {
        println!("first_violation_h {t}");
    }
    println!("deficiency_intervals {}", report.deficiency_intervals.len());
    for iv in &report.deficiency_intervals {
        println!(
            "  start_h {} end_h {} peak_kw {} energy_kwh {}",
            iv.start, iv.end, iv.peak, iv.energy
        );
    }
    println!("deadline_misses {}", misses.len());
    for m in misses {
        println!("  load {} instance {} t_h {}", m.load, m.instance, m.t);
    }
    if feasible {
        0
    } else {
        1
    }
}
