//! `clonesel`: prepare trial data, benchmark classifiers, run forward selection and
//! the simulation study.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "clonesel", version, about = "Clone-selection classifier benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Engineer, filter, split, impute and encode the model inputs.
    Prepare(Flags),
    /// Impute the training and test splits and write them with MICE metadata.
    Impute(Flags),
    /// Tune and evaluate every family on both pipeline arms.
    Bench(Flags),
    /// Forward feature selection at each feature fraction.
    Select(Flags),
    /// Replicated synthetic-data study.
    Simulate(Flags),
    /// Summarize a bench run.
    Report(Flags),
}

#[derive(Args, Debug, Clone, Default)]
pub struct Flags {
    /// Run configuration JSON.
    #[arg(long, env = "CLONESEL_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub na_threshold: Option<usize>,
    /// mean or half-range
    #[arg(long)]
    pub gdd_formula: Option<String>,
    /// Run only the complete-case arm.
    #[arg(long)]
    pub no_impute: bool,
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub weather: Option<PathBuf>,
    #[arg(long)]
    pub history: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (name, flags) = match &cli.command {
        Command::Prepare(f) => ("prepare", f),
        Command::Impute(f) => ("impute", f),
        Command::Bench(f) => ("bench", f),
        Command::Select(f) => ("select", f),
        Command::Simulate(f) => ("simulate", f),
        Command::Report(f) => ("report", f),
    };
    if let Some(n) = flags.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let cfg = config::resolve(flags)?;
    match cli.command {
        Command::Prepare(_) => commands::prepare(&cfg),
        Command::Impute(_) => commands::impute(&cfg),
        Command::Bench(_) => commands::bench(&cfg),
        Command::Select(_) => commands::select(&cfg),
        Command::Simulate(_) => commands::simulate(&cfg),
        Command::Report(_) => commands::report(&cfg),
    }
    .map_err(|e| e.context(format!("{name} failed")))
}
