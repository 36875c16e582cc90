//! `msm`: simulate cohorts, compute the Monte Carlo truth, run the Markov
//! tests, estimate transition probabilities and score the estimators.

mod config;
mod error;
mod manifest;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use error::CliError;
use stages::Outcome;

const DEFAULT_OUT: &str = "msm-out";

#[derive(Parser, Debug)]
#[command(
    name = "msm",
    version,
    about = "Multi-state transition probability simulation pipeline"
)]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the configuration).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the configuration).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one cohort per replicate.
    Simulate,
    /// Monte Carlo truth from uncensored paths.
    Truth,
    /// Markov tests on every simulated cohort.
    Test(TestArgs),
    /// Run the configured estimators on every simulated cohort.
    Estimate,
    /// Join estimates with the truth into the evaluation tables.
    Evaluate,
    /// All stages in order.
    Pipeline,
    /// Print the resolved configuration as TOML.
    ShowConfig,
}

#[derive(Args, Debug)]
struct TestArgs {
    /// Test methods (`cox`, `logrank`), comma separated.
    #[arg(long, value_delimiter = ',')]
    method: Option<Vec<String>>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    n_bootstrap: Option<usize>,
    /// Log-rank grid size.
    #[arg(long)]
    grid_size: Option<usize>,
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Command::Test(args) = &cli.command {
        if let Some(m) = &args.method {
            config.tests.methods = m.clone();
        }
        if let Some(a) = args.alpha {
            config.tests.alpha = a;
        }
        if let Some(b) = args.n_bootstrap {
            config.tests.n_bootstrap = b;
        }
        if let Some(g) = args.grid_size {
            config.tests.grid_size = g;
        }
    }
    let out = cli
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let plan = config.plan()?;

    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::validation("jobs", "must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::validation("jobs", e.to_string()))?;
    }

    let outcome = match cli.command {
        Command::Simulate => stages::simulate(&plan, &out)?,
        Command::Truth => stages::truth(&plan, &out)?,
        Command::Test(_) => stages::test(&plan, &out)?,
        Command::Estimate => stages::estimate(&plan, &out)?,
        Command::Evaluate => stages::evaluate(&plan, &out)?,
        Command::Pipeline => stages::pipeline(&plan, &out)?,
        Command::ShowConfig => {
            print!("{}", config.to_toml());
            return Ok(Outcome::Complete);
        }
    };
    eprintln!("msm: results in {}", out.display());
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Complete) => ExitCode::SUCCESS,
        Ok(Outcome::NonConverged(reps)) => {
            let list: Vec<String> = reps.iter().map(usize::to_string).collect();
            eprintln!(
                "msm: some fits did not converge (replicates {}); see manifest.json",
                list.join(", ")
            );
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("msm: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
