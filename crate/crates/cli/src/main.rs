use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod error;
mod manifest;
mod values;

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "foodrescue", version, about = "Food rescue pickup simulation")]
struct Cli {
    /// Suppress progress and summary output on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit peaks-over-threshold models to daily donation records.
    Fit(FitArgs),
    /// Partition donors into pickup clusters.
    Cluster(ClusterArgs),
    /// Run one multi-day simulation.
    Simulate(SimulateArgs),
    /// Run a simulation for every cell of a parameter grid.
    Sweep(SweepArgs),
    /// Write a seeded synthetic donor set and distance table.
    GenSynthetic(GenArgs),
}

#[derive(Debug, Args)]
struct FitArgs {
    /// CSV of `donor_id,date,lbs` records.
    #[arg(long)]
    values: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    threshold: f64,
    /// Fit only this label (a category, or `all`).
    #[arg(long)]
    category: Option<String>,
    /// Donor set used to group records by category.
    #[arg(long)]
    donors: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct Inputs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    donors: PathBuf,
    /// CSV of `from_id,to_id,km` rows.
    #[arg(long)]
    distances: Option<PathBuf>,
    /// Fits document; the built-in reference fits when omitted.
    #[arg(long)]
    fits: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ClusterArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    donors: PathBuf,
    #[arg(long)]
    distances: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of clusters.
    #[arg(short, long)]
    k: Option<usize>,
    #[arg(long, value_enum)]
    method: Option<Method>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    KMedoids,
    KMeans,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    inputs: Inputs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepKind {
    Epsilon,
    Demand,
    Participation,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(value_enum)]
    kind: SweepKind,
    #[command(flatten)]
    inputs: Inputs,
    /// Comma-separated values: epsilons, demands, or participation fractions.
    #[arg(long, value_delimiter = ',')]
    grid: Vec<f64>,
    /// Demand values for a participation sweep.
    #[arg(long, value_delimiter = ',')]
    demand_grid: Vec<f64>,
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Preset name (`cfs90`, `cfs156`) or path to a JSON profile.
    #[arg(long, default_value = "cfs90")]
    profile: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = foodrescue::geo::DEFAULT_CIRCUITY)]
    circuity: f64,
    /// Also write this many days of synthetic `donor_id,date,lbs` records.
    #[arg(long)]
    value_days: Option<u32>,
    #[arg(long)]
    out_dir: PathBuf,
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let quiet = cli.quiet;
    match cli.command {
        Command::Fit(a) => commands::fit(&a, quiet),
        Command::Cluster(a) => commands::cluster(&a, quiet),
        Command::Simulate(a) => commands::simulate(&a.inputs, quiet),
        Command::Sweep(a) => commands::sweep(&a, quiet),
        Command::GenSynthetic(a) => commands::gen_synthetic(&a, quiet),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {message}", e.module());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
