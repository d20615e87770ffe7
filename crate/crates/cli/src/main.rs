//! `eamod`: generate instances, solve them, and run the design experiments.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use eamod::EamodError;
use thiserror::Error;

use commands::{ExperimentKind, Run};
use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Data(EamodError),
    #[error("solver: {0}")]
    Solver(EamodError),
}

impl CliError {
    /// Routes solver outcomes to the solver exit code and everything else to data.
    pub fn from_solver(e: EamodError) -> Self {
        match e {
            EamodError::Infeasible
            | EamodError::TimeLimit
            | EamodError::InfeasibleQuota { .. }
            | EamodError::Lp(_)
            | EamodError::InstanceTooLarge(_) => CliError::Solver(e),
            other => CliError::Data(other),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } | CliError::Io { .. } | CliError::Data(_) => 2,
            CliError::Solver(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "eamod", version, about = "Fleet, battery and charging design for electric mobility-on-demand")]
struct Cli {
    /// JSON run configuration; missing keys take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Worker threads for scenario-level parallelism.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Overrides `experiment.seed`.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Also write the assembled model as `model.mps` in the output directory.
    #[arg(long, global = true)]
    export_mps: bool,
    /// Overrides `paths.output_dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic grid network, stations and requests.
    Generate,
    /// Solve the configured request file as a single instance.
    Solve,
    /// Run one of the design experiments.
    Experiment {
        #[arg(value_enum)]
        kind: Kind,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    Sample,
    SizeScan,
    Sensitivity,
    Lifetime,
    Overlap,
}

impl From<Kind> for ExperimentKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Sample => ExperimentKind::Sample,
            Kind::SizeScan => ExperimentKind::SizeScan,
            Kind::Sensitivity => ExperimentKind::Sensitivity,
            Kind::Lifetime => ExperimentKind::Lifetime,
            Kind::Overlap => ExperimentKind::Overlap,
        }
    }
}

fn help_footer() -> String {
    let mut s = String::from("Config keys (JSON, dotted path = default):\n");
    for line in config::documented_keys() {
        s.push_str("  ");
        s.push_str(&line);
        s.push('\n');
    }
    s.push_str("\nPrecedence: flag > config file > default.");
    s
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    if let Some(s) = cli.seed {
        cfg.experiment.seed = s;
    }
    if let Some(dir) = cli.out {
        cfg.paths.output_dir = dir;
    }
    cfg.validate()?;
    let run = Run {
        cfg,
        export_mps: cli.export_mps,
    };
    match cli.command {
        Command::Generate => {
            for f in commands::generate(&run)? {
                println!("{}", f.display());
            }
        }
        Command::Solve => {
            let r = commands::solve_instance(&run)?;
            let sol = r.solution.as_ref().expect("solve returns a solution");
            println!(
                "status {:?}, objective {:.6} EUR, {} vehicles, {}/{} requests served",
                sol.status,
                sol.objective_eur,
                sol.used_vehicles(),
                sol.served_count(),
                r.n_requests
            );
        }
        Command::Experiment { kind } => {
            let path = commands::experiment(&run, kind.into())?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = match Cli::command().after_help(help_footer()).try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
