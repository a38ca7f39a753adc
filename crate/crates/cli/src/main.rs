use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod check;
mod common;
mod config;
mod error;
mod pipeline;
mod project;
mod search;
mod synth;
mod train;

use common::{write_json, Context};
use config::{merge, ConfigFile};
use error::Result;

/// Attribute spaces, intersection search and latent geometry analysis.
#[derive(Parser, Debug)]
#[command(name = "attrspace", version)]
struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to every core).
    #[arg(long, global = true, env = "ATTRSPACE_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a labeled space from a preset or scenario file.
    Synth(synth::SynthArgs),
    /// Train the toy autoencoder and write its latent space.
    Train(train::TrainArgs),
    /// Search for a point combining several attributes.
    Search(search::SearchArgs),
    /// Weighted mean of the target attribute centers.
    Baseline(search::BaselineArgs),
    /// Run the search over several neighbor counts.
    Sweep(search::SweepArgs),
    /// PCA projections, density grids and overlays.
    Project(project::ProjectArgs),
    /// Built-in verification suites.
    Check(check::CheckArgs),
    /// synth, train, search and project in one directory.
    Pipeline(pipeline::PipelineArgs),
}

fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let seed = match cli.seed {
        Some(s) => s,
        None => config.seed()?.unwrap_or(0),
    };
    let threads = match cli.threads {
        Some(t) => Some(t),
        None => config.threads()?,
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(error::CliError::usage("--threads must be positive"));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already configured: {e}");
        }
    }
    let ctx = Context { seed };
    match &cli.command {
        Command::Synth(a) => write_json(None, &synth::run(&merge(a, config.section("synth"))?, &ctx)?),
        Command::Train(a) => train::run(&merge(a, config.section("train"))?, &ctx),
        Command::Search(a) => search::run_search(&merge(a, config.section("search"))?, &ctx),
        Command::Baseline(a) => search::run_baseline(&merge(a, config.section("baseline"))?, &ctx),
        Command::Sweep(a) => search::run_sweep(&merge(a, config.section("sweep"))?, &ctx),
        Command::Project(a) => write_json(None, &project::run(&merge(a, config.section("project"))?, &ctx)?),
        Command::Check(a) => check::run(&merge(a, config.section("check"))?, &ctx),
        Command::Pipeline(a) => pipeline::run(&merge(a, config.section("pipeline"))?, &config, &ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
