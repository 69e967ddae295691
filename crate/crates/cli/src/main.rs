//! `pgrad`: run policy-gradient experiments from JSON configs.

mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{CliResult, ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(name = "pgrad", version, about = "Policy-gradient estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Gradient estimates against the true gradient, as a JSON report.
    Estimate(RunArgs),
    /// Relative error over a grid of constant baselines, as CSV.
    Sweep(RunArgs),
    /// Relative error against trajectory length, as CSV.
    BiasVariance(RunArgs),
    /// Training curves, as CSV.
    Train(RunArgs),
    /// Exact stationary distribution, average reward, gradient and optimal
    /// baseline of a tabular problem, as JSON.
    Oracle(RunArgs),
    /// Renders a sweep or training CSV as an SVG line chart.
    Plot { csv: PathBuf, out: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Discount factors, comma separated.
    #[arg(long, value_delimiter = ',')]
    gamma: Option<Vec<f64>>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    replicas: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Algorithms, comma separated: gpomdp, garb, olpomdp, olgarb.
    #[arg(long, value_delimiter = ',')]
    algo: Option<Vec<String>>,
    /// three-state, tabular, bandit, acrobot or puckworld.
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads, 0 for one per core. Does not change the output.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

impl RunArgs {
    fn resolve(self) -> CliResult<(ExperimentConfig, usize)> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        cfg.apply(Overrides {
            gammas: self.gamma,
            steps: self.steps,
            replicas: self.replicas,
            seed: self.seed,
            algorithms: self.algo,
            env: self.env,
            alpha: self.alpha,
            out: self.out,
        });
        Ok((cfg, self.jobs))
    }
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Estimate(a) => a.resolve().and_then(|(c, j)| commands::estimate(&c, j)),
        Command::Sweep(a) => a.resolve().and_then(|(c, j)| commands::sweep(&c, j)),
        Command::BiasVariance(a) => a.resolve().and_then(|(c, j)| commands::bias_variance(&c, j)),
        Command::Train(a) => a.resolve().and_then(|(c, j)| commands::train(&c, j)),
        Command::Oracle(a) => a.resolve().and_then(|(c, _)| commands::oracle(&c)),
        Command::Plot { csv, out } => commands::plot(&csv, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pgrad: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
