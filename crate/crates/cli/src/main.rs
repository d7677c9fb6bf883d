//! tunefit command-line interface.

mod commands;
mod config;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "tunefit", version, about = "Surrogate-based simulator tuning with automatic observable weights")]
struct Cli {
    /// JSON run configuration; flags override its fields
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for data-parallel loops
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit per-bin surrogates to simulator runs
    Surrogate(SurrogateArgs),
    /// Exclude outlying observables or bins
    Filter(FilterArgs),
    /// Tune parameters (and weights)
    Tune(TuneArgs),
    /// Report quality metrics of a tune
    Evaluate(EvaluateArgs),
    /// Eigentune confidence intervals around a tune
    Eigentune(EigentuneArgs),
    /// Cumulative density curve of per-observable χ²
    Cdf(CdfArgs),
}

#[derive(Args)]
struct Inputs {
    /// Reference data document
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Output document
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SurrogateArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Simulator run grid
    #[arg(long)]
    runs: Option<PathBuf>,
    /// polynomial or rational
    #[arg(long)]
    model: Option<String>,
    /// Polynomial degree
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long)]
    num_degree: Option<usize>,
    #[arg(long)]
    den_degree: Option<usize>,
}

#[derive(Args)]
struct InnerArgs {
    /// Multistart count of the inner χ² minimization
    #[arg(long)]
    multistarts: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FilterArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Fitted surrogate document
    #[arg(long)]
    surrogate: Option<PathBuf>,
    /// Existing mask to refine
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Run grid; when given, observables outside the run envelope are dropped first
    #[arg(long)]
    runs: Option<PathBuf>,
    /// none, observable or bin
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// mean or sum of bin terms in the window test
    #[arg(long)]
    statistic: Option<String>,
    #[arg(long)]
    zscore_threshold: Option<f64>,
    #[command(flatten)]
    inner: InnerArgs,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    surrogate: Option<PathBuf>,
    #[arg(long)]
    mask: Option<PathBuf>,
    /// all-weights-equal, bilevel or robust
    #[arg(long)]
    method: Option<String>,
    /// Bilevel outer objective: portfolio, meanscore or medianscore
    #[arg(long)]
    objective: Option<String>,
    /// Risk aversion of the portfolio objective
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    n0: Option<usize>,
    /// Number of weight vectors evaluated by the bilevel loop
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    n_cand: Option<usize>,
    /// Comma-separated ν values cycled by candidate selection
    #[arg(long, value_delimiter = ',')]
    nu_cycle: Option<Vec<f64>>,
    /// Explicit comma-separated μ values for the robust sweep
    #[arg(long, value_delimiter = ',')]
    mu: Option<Vec<f64>>,
    /// Number of random μ values when none are given
    #[arg(long)]
    mu_count: Option<usize>,
    /// Smoothing of the robust max
    #[arg(long)]
    epsilon: Option<f64>,
    /// Multistart count of the robust pattern search
    #[arg(long)]
    robust_multistarts: Option<usize>,
    /// CSV file for the evaluation history
    #[arg(long)]
    history: Option<PathBuf>,
    /// Directory for per-μ artifacts of a robust sweep
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[command(flatten)]
    inner: InnerArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    surrogate: Option<PathBuf>,
    /// Tune result document
    #[arg(long)]
    result: Option<PathBuf>,
    /// Number of τ grid points for curve exports
    #[arg(long)]
    taus: Option<usize>,
    /// Directory for the CDF curve export
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct EigentuneArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    surrogate: Option<PathBuf>,
    #[arg(long)]
    result: Option<PathBuf>,
    /// Scale of the effective sample size
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Args)]
struct CdfArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    surrogate: Option<PathBuf>,
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Tune result; omit to build the ideal curve instead
    #[arg(long)]
    result: Option<PathBuf>,
    #[arg(long)]
    taus: Option<usize>,
    #[command(flatten)]
    inner: InnerArgs,
}

impl Inputs {
    fn patch(&self, c: &mut RunConfig) {
        c.reference = self.reference.clone();
        c.output = self.output.clone();
    }
}

impl InnerArgs {
    fn patch(&self, c: &mut RunConfig) {
        c.multistarts = self.multistarts;
        c.max_iterations = self.max_iterations;
        c.seed = self.seed;
    }
}

impl Command {
    fn flags(&self) -> RunConfig {
        let mut c = RunConfig::default();
        match self {
            Command::Surrogate(a) => {
                a.inputs.patch(&mut c);
                c.runs = a.runs.clone();
                c.model = a.model.clone();
                c.degree = a.degree;
                c.num_degree = a.num_degree;
                c.den_degree = a.den_degree;
            }
            Command::Filter(a) => {
                a.inputs.patch(&mut c);
                a.inner.patch(&mut c);
                c.surrogate = a.surrogate.clone();
                c.mask = a.mask.clone();
                c.runs = a.runs.clone();
                c.filter = a.mode.clone();
                c.alpha = a.alpha;
                c.statistic = a.statistic.clone();
                c.zscore_threshold = a.zscore_threshold;
            }
            Command::Tune(a) => {
                a.inputs.patch(&mut c);
                a.inner.patch(&mut c);
                c.surrogate = a.surrogate.clone();
                c.mask = a.mask.clone();
                c.method = a.method.clone();
                c.objective = a.objective.clone();
                c.lambda = a.lambda;
                c.n0 = a.n0;
                c.n_max = a.n_max;
                c.n_cand = a.n_cand;
                c.nu_cycle = a.nu_cycle.clone();
                c.mu = a.mu.clone();
                c.mu_count = a.mu_count;
                c.epsilon = a.epsilon;
                c.robust_multistarts = a.robust_multistarts;
                c.history = a.history.clone();
                c.output_dir = a.output_dir.clone();
            }
            Command::Evaluate(a) => {
                a.inputs.patch(&mut c);
                c.surrogate = a.surrogate.clone();
                c.result = a.result.clone();
                c.taus = a.taus;
                c.output_dir = a.output_dir.clone();
            }
            Command::Eigentune(a) => {
                a.inputs.patch(&mut c);
                c.surrogate = a.surrogate.clone();
                c.result = a.result.clone();
                c.gamma = a.gamma;
            }
            Command::Cdf(a) => {
                a.inputs.patch(&mut c);
                a.inner.patch(&mut c);
                c.surrogate = a.surrogate.clone();
                c.mask = a.mask.clone();
                c.result = a.result.clone();
                c.taus = a.taus;
            }
        }
        c
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let base = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let mut flags = cli.command.flags();
    flags.threads = cli.threads;
    let cfg = base.overlay(&flags);
    if let Some(n) = cfg.threads {
        if !tunefit::par::init_global_pool(n) {
            log::warn!("worker pool already initialised; --threads ignored");
        }
    }
    match cli.command {
        Command::Surrogate(_) => commands::surrogate(&cfg),
        Command::Filter(_) => commands::filter(&cfg),
        Command::Tune(_) => commands::tune(&cfg),
        Command::Evaluate(_) => commands::evaluate(&cfg),
        Command::Eigentune(_) => commands::eigentune(&cfg),
        Command::Cdf(_) => commands::cdf(&cfg),
    }
}
