use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use kslab::config::ExperimentConfig;
use kslab::sweep::{run_sweep, SweepConfig};
use kslab::{report, run, CliError, Exit};

#[derive(Parser)]
#[command(name = "kslab", version, about = "Chemotaxis experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed override for stochastic initial data.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run { config: PathBuf },
    /// Run a parameter sweep.
    Sweep { config: PathBuf },
    /// Emit plot data and a verdict table for a results directory.
    Report { dir: PathBuf },
}

const DEFAULT_OUT: &str = "kslab-out";

fn dispatch(cli: Cli) -> Result<Exit, CliError> {
    match cli.command {
        Command::Run { config } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            if let Some(out) = cli.out {
                cfg.output_dir = Some(out);
            }
            let dir = cfg.output_dir.clone().unwrap_or_else(|| DEFAULT_OUT.into());
            let outcome = run::run_to_dir(&cfg, &dir)?;
            let r = &outcome.report;
            for v in &r.verdicts {
                eprintln!(
                    "{:<20} {}  measured={:.6e} target={:.6e}",
                    v.check,
                    if v.pass { "PASS" } else { "FAIL" },
                    v.measured,
                    v.target
                );
            }
            if let Some(msg) = &r.failure {
                eprintln!("solver diverged: {msg}");
            }
            Ok(outcome.exit())
        }
        Command::Sweep { config } => {
            let mut sweep = SweepConfig::load(&config)?;
            if let Some(seed) = cli.seed {
                sweep.template.seed = seed;
            }
            let root = cli
                .out
                .or_else(|| sweep.output_dir.clone())
                .unwrap_or_else(|| DEFAULT_OUT.into());
            let outcome = run_sweep(&sweep, &root, cli.workers)?;
            for (i, r) in outcome.results.iter().enumerate() {
                if let kslab::sweep::PointResult::Invalid(msg) = r {
                    eprintln!("point {i}: {msg}");
                }
            }
            Ok(outcome.exit)
        }
        Command::Report { dir } => {
            let runs = report::write_report(&dir, cli.out.as_deref())?;
            print!("{}", report::summary_table(&runs));
            Ok(Exit::Pass)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(Exit::ConfigError.code()),
            };
        }
    };
    match dispatch(cli) {
        Ok(exit) => ExitCode::from(exit.code()),
        Err(e) => {
            eprintln!("kslab: {e}");
            ExitCode::from(e.exit().code())
        }
    }
}
