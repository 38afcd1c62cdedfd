use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mvhmm::rng::DEFAULT_SEED;
use mvhmm::{FitConfig, StructurePair};

#[derive(Debug, Parser)]
#[command(name = "mvhmm", version, about = "Parsimonious matrix-variate hidden Markov models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one structure with a fixed number of states.
    Fit(FitArgs),
    /// Fit a grid of structures and state counts and pick the smallest BIC.
    Select(SelectArgs),
    /// Generate replicates from a scenario, fit them and score parameter recovery.
    Simulate(SimulateArgs),
    /// Export per-unit state labels and per-time switch counts from a fit report.
    Decode(DecodeArgs),
    /// Time the full structure grid sequentially and in parallel.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Long-format table with columns unit,time,row_level,col_level,value.
    #[arg(long)]
    pub data: PathBuf,
    /// Field delimiter of the data file.
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    /// Apply log(x / (1 - x)) to every value before fitting.
    #[arg(long)]
    pub logit: bool,
}

#[derive(Debug, Args, Clone)]
pub struct EstimationArgs {
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Relative log-likelihood change that stops a fit.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    /// Number of random short starts.
    #[arg(long, default_value_t = 100)]
    pub short_runs: usize,
    /// ECM iterations per short start.
    #[arg(long, default_value_t = 1)]
    pub short_iters: usize,
}

impl EstimationArgs {
    pub fn config(&self) -> FitConfig {
        FitConfig {
            max_iter: self.max_iter,
            tol: self.tol,
            short_runs: self.short_runs,
            short_iters: self.short_iters,
            seed: self.seed,
            ..FitConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Structure pair such as VVE-VE.
    #[arg(long)]
    pub structure: StructurePair,
    #[arg(long = "K", short = 'K')]
    pub k: usize,
    #[command(flatten)]
    pub estimation: EstimationArgs,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// State counts, e.g. "1,2,3", "1-10" or "1..10".
    #[arg(long = "Ks")]
    pub ks: Counts,
    /// Comma-separated structure pairs, or "all".
    #[arg(long, default_value = "all")]
    pub structures: StructureList,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[command(flatten)]
    pub estimation: EstimationArgs,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Built-in scenario label (e.g. EII-II/K2/T5/overlap2) or a scenario file.
    #[arg(long)]
    pub scenario: String,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[command(flatten)]
    pub estimation: EstimationArgs,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// A fit report written by `fit` or `select`.
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Sequential,
    Parallel,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated built-in scenario labels, or "all".
    #[arg(long, default_value = "all")]
    pub scenarios: String,
    #[arg(long, value_delimiter = ',', default_value = "sequential,parallel")]
    pub modes: Vec<ModeArg>,
    #[arg(long, default_value_t = 8)]
    pub workers: usize,
    #[command(flatten)]
    pub estimation: EstimationArgs,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Counts(pub Vec<usize>);

impl FromStr for Counts {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        parse_counts(s).map(Counts)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureList(pub Vec<StructurePair>);

impl FromStr for StructureList {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        parse_structures(s).map(StructureList)
    }
}

/// Parses state counts from comma-separated items, each a number or an
/// inclusive range written `a-b` or `a..b`.
pub fn parse_counts(text: &str) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let bounds = item.split_once("..").or_else(|| item.split_once('-'));
        let number = |s: &str| s.trim().parse::<usize>().map_err(|_| format!("invalid count {s:?} in {text:?}"));
        match bounds {
            Some((a, b)) => {
                let (a, b) = (number(a)?, number(b)?);
                if a > b {
                    return Err(format!("empty range {item:?}"));
                }
                out.extend(a..=b);
            }
            None => out.push(number(item)?),
        }
    }
    if out.is_empty() {
        return Err("no state counts given".into());
    }
    Ok(out)
}

pub fn parse_structures(text: &str) -> Result<Vec<StructurePair>, String> {
    if text.trim().eq_ignore_ascii_case("all") {
        return Ok(StructurePair::all());
    }
    text.split(',')
        .map(|s| s.trim().parse::<StructurePair>().map_err(|e| e.to_string()))
        .collect()
}
