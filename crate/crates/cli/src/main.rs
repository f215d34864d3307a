use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gpt_density::sampler::ModelConfig;
use gpt_density_cli::commands;
use gpt_density_cli::config::{FileConfig, Settings};
use gpt_density_cli::error::{CliError, Result};

/// Bayesian density estimation and density regression with Gaussian process
/// transfer functions.
#[derive(Debug, Parser)]
#[command(name = "gpt-density", version)]
struct Cli {
    /// TOML file of settings; unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads for replicates and hyperparameter cells.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate a density from a single-column CSV.
    EstimateDensity {
        data: PathBuf,
        /// Single-column CSV whose kernel estimate centers the prior.
        #[arg(long)]
        elicit: Option<PathBuf>,
    },
    /// Conditional density of y given z; `train` has columns y and z, `test`
    /// has z and optionally y.
    Regress { train: PathBuf, test: PathBuf },
    /// L1 errors on simulated Marron-Wand samples.
    BenchmarkMw {
        #[arg(long)]
        replicates: Option<usize>,
        /// Comma-separated curve ids out of 2, 6, 8, 9.
        #[arg(long, value_delimiter = ',')]
        ids: Option<Vec<u32>>,
    },
    /// MSE, coverage and conditional L1 on the simulated regression design.
    BenchmarkRegression {
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Densities drawn from the prior over a grid of kernel hyperparameters.
    PriorDraws {
        #[arg(long)]
        elicit: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Validation("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Validation(e.to_string()))?;
    }
    let mut file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let base = match cli.command {
        Command::PriorDraws { .. } => ModelConfig::elicited_preset(),
        _ => ModelConfig::default(),
    };
    let replicates = match &cli.command {
        Command::BenchmarkMw { replicates, ids } => {
            if ids.is_some() {
                file.ids = ids.clone();
            }
            *replicates
        }
        Command::BenchmarkRegression { replicates } => *replicates,
        _ => None,
    };
    let settings = Settings::resolve(&file, base)?.with_overrides(cli.seed, replicates);
    let out = cli.out.as_path();
    let manifest = match &cli.command {
        Command::EstimateDensity { data, elicit } => commands::estimate_density(&settings, data, elicit.as_deref(), out)?,
        Command::Regress { train, test } => commands::regress(&settings, train, test, out)?,
        Command::BenchmarkMw { .. } => commands::bench_mw(&settings, out)?,
        Command::BenchmarkRegression { .. } => commands::bench_regression(&settings, out)?,
        Command::PriorDraws { elicit } => commands::prior_draws(&settings, elicit.as_deref(), out)?,
    };
    eprintln!("wrote {}", manifest.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
