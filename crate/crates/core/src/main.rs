use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use pcsched::experiment::{
    arithmetic_mean, geometric_mean, run_sweep, write_bnb_trace_csv, write_sweep_csv,
    ExperimentConfig, SolutionRecord,
};
use pcsched::feasibility::{verify, VerifyOptions};
use pcsched::{scheduler, solve, Error, Status};

#[derive(Parser)]
#[command(
    version,
    about = "Joint power control and time division for dense Wi-Fi"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One-shot power control; writes the solution record as JSON.
    Solve(Common),
    /// Time-slotted run; writes a JSON summary, per-slot CSV via --trace.
    Schedule(Common),
    /// Inter-site-distance sweep over all configured modes; writes CSV.
    Sweep(Common),
    /// Checks a saved solution record against the configured instance.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Solution record produced by `solve`.
        #[arg(long)]
        solution: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Defaults to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Overrides sweep.seed (STA placement).
    #[arg(long)]
    seed: Option<u64>,
    /// Iteration trace for `solve`, per-slot trace for `schedule`.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

enum Failure {
    Usage(String),
    Rejected(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

#[derive(Serialize)]
struct ScheduleSummary {
    avg_rates_mbps: Vec<f64>,
    geo_mean_mbps: f64,
    arith_mean_mbps: f64,
    slots: usize,
    iteration_limited: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Rejected(report)) => {
            eprintln!("{report}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut config = ExperimentConfig::from_path(&common.config)?;
    if let Some(seed) = common.seed {
        config.sweep.seed = seed;
    }
    Ok(config)
}

fn sink(path: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn create(path: &Path) -> io::Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new)
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Solve(common) => {
            let config = load(&common)?;
            let instance = config.instance()?;
            let curve = config.curve()?;
            let utility = config.utility(instance.n_pairs())?;
            let mut options = config.solver_options();
            options.trace = common.trace.is_some();
            let sol = solve(&instance, &curve, &utility, &options)?;
            if let Some(path) = &common.trace {
                write_bnb_trace_csv(&sol.trace, create(path)?)?;
            }
            let record = SolutionRecord {
                equivalent_rate_mbps: utility.equivalent_rate(sol.utility),
                rates_mbps: sol.rates,
                powers_mw: sol.powers,
                utility: sol.utility,
                status: sol.status,
                iterations: sol.iterations,
            };
            if !common.quiet {
                eprintln!(
                    "{:?} after {} iterations, equivalent rate {:.4} Mbit/s",
                    record.status, record.iterations, record.equivalent_rate_mbps
                );
                if record.status == Status::IterationLimit {
                    eprintln!("warning: iteration limit reached, optimality gap not certified");
                }
            }
            let mut out = sink(&common.output)?;
            serde_json::to_writer_pretty(&mut out, &record).map_err(Error::from)?;
            writeln!(out)?;
            out.flush()?;
        }
        Command::Schedule(common) => {
            let config = load(&common)?;
            let instance = config.instance()?;
            let curve = config.curve()?;
            let run = scheduler::run(&instance, &curve, &config.scheduler_config())?;
            if let Some(path) = &common.trace {
                scheduler::write_trace_csv(&run, create(path)?)?;
            }
            let summary = ScheduleSummary {
                geo_mean_mbps: geometric_mean(&run.avg_rates, config.solver.rate_floor),
                arith_mean_mbps: arithmetic_mean(&run.avg_rates),
                slots: run.slots.len(),
                iteration_limited: run.hit_iteration_limit(),
                avg_rates_mbps: run.avg_rates,
            };
            if !common.quiet {
                eprintln!(
                    "{} slots, geometric mean {:.4} Mbit/s",
                    summary.slots, summary.geo_mean_mbps
                );
            }
            let mut out = sink(&common.output)?;
            serde_json::to_writer_pretty(&mut out, &summary).map_err(Error::from)?;
            writeln!(out)?;
            out.flush()?;
        }
        Command::Sweep(common) => {
            let config = load(&common)?;
            if common.trace.is_some() && !common.quiet {
                eprintln!("note: --trace has no effect on sweep");
            }
            let rows = run_sweep(&config)?;
            if !common.quiet {
                let limited = rows.iter().filter(|r| r.iteration_limited).count();
                eprintln!("{} rows, {limited} hit the iteration limit", rows.len());
            }
            let mut out = sink(&common.output)?;
            write_sweep_csv(&rows, config.solver.rate_floor, &mut out)?;
            out.flush()?;
        }
        Command::Verify { common, solution } => {
            let config = load(&common)?;
            let instance = config.instance()?;
            let curve = config.curve()?;
            let text = std::fs::read_to_string(&solution)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", solution.display())))?;
            let record: SolutionRecord = serde_json::from_str(&text)
                .map_err(|e| Failure::Usage(format!("{}: {e}", solution.display())))?;
            let report = verify(
                &record.powers_mw,
                &record.rates_mbps,
                &instance,
                &curve,
                &VerifyOptions::default(),
            );
            let mut out = sink(&common.output)?;
            write!(out, "{report}")?;
            out.flush()?;
            if !report.is_ok() {
                return Err(Failure::Rejected(format!(
                    "verification failed: {} violation(s)",
                    report.violations.len()
                )));
            }
        }
    }
    Ok(())
}
