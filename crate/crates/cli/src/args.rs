use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use tensorm::SamplerConfig;

#[derive(Debug, Parser)]
#[command(name = "tensorm", version, about = "Probabilistic Boolean tensor decomposition")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", content = "args", rename_all = "kebab-case")]
pub enum Command {
    /// Fit factor matrices to a tensor.
    Fit(FitArgs),
    /// Fit and fill in the missing entries of a tensor.
    Complete(FitArgs),
    /// Generate a random Boolean tensor with known factors.
    Simulate(SimulateArgs),
    /// Choose the number of latent dimensions.
    SelectRank(SelectRankArgs),
    /// Turn a continuous object×attribute CSV into a relation tensor.
    Encode(EncodeArgs),
    /// Run the simulation benchmark grid.
    Bench(BenchArgs),
    /// Repeat a previous run from its manifest.
    Rerun(RerunArgs),
}

/// Where a command writes and whether it may replace an existing directory.
#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct OutputArgs {
    /// Output directory; created atomically once every file is written.
    #[arg(short, long)]
    pub out: PathBuf,
    /// Replace the output directory if it already exists.
    #[arg(long)]
    #[serde(skip)]
    pub force: bool,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct ThreadArgs {
    /// Worker threads [default: available parallelism].
    #[arg(long, env = "TENSORM_THREADS")]
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl ThreadArgs {
    pub fn resolve(&self) -> usize {
        match self.threads {
            Some(n) if n > 0 => n,
            _ => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        }
    }
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct SamplerArgs {
    /// Seed for all randomness; drawn at random and recorded when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Posterior samples drawn after burn-in.
    #[arg(long, default_value_t = 50)]
    pub samples: usize,
    /// Beta prior on σ(λ): pseudo-count of correct entries.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Beta prior on σ(λ): pseudo-count of incorrect entries.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long = "max-burnin", default_value_t = 500)]
    pub max_burn_in: usize,
    /// Convergence tolerance on the windowed mean of σ(λ).
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    /// Convergence window in sweeps.
    #[arg(long, default_value_t = 20)]
    pub window: usize,
    /// Independent burn-in runs; sampling continues from the most likely.
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0.5)]
    pub lambda_init: f64,
    /// Keep λ at its initial value.
    #[arg(long)]
    pub fix_lambda: bool,
    /// Stop updating λ once sampling starts.
    #[arg(long)]
    pub freeze_lambda_in_sampling: bool,
    /// Visit modes in random order each sweep.
    #[arg(long)]
    pub random_scan: bool,
    #[command(flatten)]
    #[serde(skip, default = "no_threads")]
    pub threads: ThreadArgs,
}

fn no_threads() -> ThreadArgs {
    ThreadArgs { threads: None }
}

impl SamplerArgs {
    pub fn config(&self, rank: usize) -> SamplerConfig {
        SamplerConfig {
            rank,
            max_burn_in_sweeps: self.max_burn_in,
            convergence_window: self.window,
            convergence_tol: self.tol,
            n_samples: self.samples,
            seed: self.seed.expect("seed resolved before configuring"),
            threads: self.threads.resolve(),
            lambda_init: self.lambda_init,
            alpha: self.alpha,
            beta: self.beta,
            update_lambda_during_sampling: !self.freeze_lambda_in_sampling,
            fix_lambda: self.fix_lambda,
            random_scan: self.random_scan,
            restarts: self.restarts,
        }
    }
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct FitArgs {
    /// Tensor file (dense binary or sparse text).
    pub input: PathBuf,
    /// Number of latent dimensions.
    #[arg(short = 'L', long)]
    pub rank: usize,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// Extents, e.g. 20,20,20.
    #[arg(long, value_delimiter = ',', default_value = "20,20,20")]
    pub dims: Vec<usize>,
    #[arg(short = 'L', long)]
    pub rank: usize,
    /// Probability of a one in each factor matrix.
    #[arg(long, conflicts_with = "density", required_unless_present = "density")]
    pub factor_density: Option<f64>,
    /// Expected density of the clean tensor.
    #[arg(long)]
    pub density: Option<f64>,
    /// Probability of flipping each entry.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Occam,
    Cv,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct SelectRankArgs {
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Starting rank for pruning.
    #[arg(long)]
    pub initial_rank: Option<usize>,
    /// Expected rank; pruning starts from twice this.
    #[arg(long, conflicts_with = "initial_rank")]
    pub expected_rank: Option<usize>,
    /// Minimum number of correctly reconstructed entries a dimension must
    /// add to be kept when pruning.
    #[arg(long, default_value_t = 0)]
    pub min_gain: usize,
    /// Candidate ranks for cross-validation, e.g. 2,3,4 or 2-6.
    #[arg(long)]
    pub ranks: Option<String>,
    /// Fraction of observed entries held out for cross-validation.
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct EncodeArgs {
    /// CSV with attribute names in the header and object IDs in column one.
    pub input: PathBuf,
    /// Skip per-attribute standardisation.
    #[arg(long)]
    pub no_normalize: bool,
    /// Differences up to this size count as ties.
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "20,20,20")]
    pub dims: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "5")]
    pub ranks: Vec<usize>,
    /// Expected tensor densities.
    #[arg(long, value_delimiter = ',', default_value = "0.3")]
    pub densities: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    pub noises: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    /// Fit at this rank instead of the true one.
    #[arg(long)]
    pub rank_fit: Option<usize>,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct RerunArgs {
    /// manifest.json written by an earlier run.
    pub manifest: PathBuf,
    #[command(flatten)]
    pub output: OutputArgs,
    #[command(flatten)]
    pub threads: ThreadArgs,
}
