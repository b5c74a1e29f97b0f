use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "scanstat", version, about = "Scan tests for an elevated-mean rectangle in a Gaussian grid")]
pub struct Cli {
    /// Worker threads (0 = all cores). SCANSTAT_THREADS takes precedence.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a noise field, optionally with a planted rectangle.
    Gen(GenArgs),
    /// Scan a field file and print the outcome as JSON.
    Scan(ScanArgs),
    /// Inspect or verify the ε-covering.
    Cover(CoverArgs),
    /// Monte Carlo size, power, ROC and QQ experiments.
    Mc(McArgs),
    /// Time the ε-adaptive scan over a list of ε.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FileFormat {
    Gf01,
    Csv,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub mu: f64,
    /// Rectangle shape, e.g. 34x38.
    #[arg(long)]
    pub shape: Option<String>,
    /// Rectangle anchor, e.g. 10x20, or "random".
    #[arg(long, default_value = "random")]
    pub anchor: String,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Defaults to csv for a .csv path and gf01 otherwise.
    #[arg(long, value_enum)]
    pub format: Option<FileFormat>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Oracle,
    Multi,
    Adaptive,
    Modified,
    Eps,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[arg(long = "in", short)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Oracle shape, e.g. 34x38.
    #[arg(long)]
    pub hstar: Option<String>,
    #[arg(long)]
    pub hlo: Option<usize>,
    /// Defaults to floor(n/e).
    #[arg(long)]
    pub hhi: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Include the per-shape table of the adaptive scan.
    #[arg(long)]
    pub per_shape: bool,
}

#[derive(Debug, Args)]
pub struct CoverArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long)]
    pub hlo: usize,
    #[arg(long)]
    pub hhi: usize,
    #[arg(long)]
    pub eps: f64,
    /// Write every covering element as CSV.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Measure the worst distance from random rectangles to the covering.
    #[arg(long)]
    pub verify: bool,
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[arg(long, default_value_t = 128)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long, default_value_t = 4)]
    pub hlo: usize,
    /// Defaults to floor(n/e).
    #[arg(long)]
    pub hhi: Option<usize>,
    #[arg(long, default_value_t = 6.0)]
    pub mu: f64,
    /// Planted shape (also the oracle's), e.g. 34x38.
    #[arg(long)]
    pub shape: Option<String>,
    #[arg(long, default_value_t = 400)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma list of oracle, multi, adaptive, modified, eps:<ε>.
    #[arg(long, default_value = "multi,adaptive")]
    pub scanners: String,
    #[arg(long, default_value = "0.01,0.05,0.1")]
    pub alphas: String,
    /// Run only the null simulations.
    #[arg(long, conflicts_with = "power")]
    pub null: bool,
    /// Run only the alternative simulations.
    #[arg(long)]
    pub power: bool,
    #[arg(long, short, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 256)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long, default_value_t = 32)]
    pub hlo: usize,
    #[arg(long, default_value_t = 64)]
    pub hhi: usize,
    #[arg(long, default_value = "2.0,1.5,1.0")]
    pub eps_list: String,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short, default_value = ".")]
    pub out: PathBuf,
}
