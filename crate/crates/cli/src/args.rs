use std::path::PathBuf;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use trajpace_core::payoff::parse_stopping_time;
use trajpace_core::{PortfolioConstraint, StoppingTime};

use crate::inputs::Inputs;

#[derive(Parser, Debug)]
#[command(
    name = "trajpace",
    version,
    about = "Minmax pricing and arbitrage analysis on trajectory trees"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a tree from a grid config or from explicit trajectories.
    Build(BuildArgs),
    /// Sample grid trajectories.
    Sample(SampleArgs),
    /// Map a price chart onto a grid trajectory.
    Ingest(IngestArgs),
    /// Classify every node of a tree.
    Classify(TreeArgs),
    /// Minmax price bounds of a payoff.
    Price(PriceArgs),
    /// Upper and lower hedges of a payoff at the root.
    Hedge(MarketArgs),
    /// Contrarian trajectory for a portfolio.
    Contrarian(ContrarianArgs),
    /// Search for an arbitrage strategy.
    Arbitrage(ArbitrageArgs),
    /// Stop a tree at a stopping time.
    Stopped(StoppedArgs),
    /// Run a seeded property suite.
    Verify(VerifyArgs),
    /// Sample a trajectory set from a discrete martingale.
    SampleMart(SampleMartArgs),
}

#[derive(Args, Debug)]
pub struct TreeOutput {
    /// Write the resulting tree JSON here.
    #[arg(long, value_name = "FILE")]
    pub tree_out: Option<PathBuf>,
    /// Write one (path, depth, price, w) row per node visit.
    #[arg(long, value_name = "FILE.csv")]
    pub emit_paths: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    /// Grid config JSON.
    #[arg(
        long,
        value_name = "FILE",
        conflicts_with = "sequences",
        required_unless_present = "sequences"
    )]
    pub config: Option<PathBuf>,
    /// JSON list of trajectories, each a list of [price, w] pairs.
    #[arg(long, value_name = "FILE")]
    pub sequences: Option<PathBuf>,
    /// Use the quadratic-variation rule for W.
    #[arg(long, requires = "config")]
    pub bjn: bool,
    #[command(flatten)]
    pub output: TreeOutput,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long, value_name = "FILE")]
    pub config: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: TreeOutput,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// CSV with `timestamp,value` rows.
    #[arg(long, value_name = "FILE.csv")]
    pub chart: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub config: PathBuf,
    /// The chart already holds log prices.
    #[arg(long)]
    pub log_values: bool,
    #[command(flatten)]
    pub output: TreeOutput,
}

#[derive(Args, Debug)]
pub struct TreeArgs {
    #[arg(long, value_name = "FILE")]
    pub tree: PathBuf,
}

#[derive(Args, Debug)]
pub struct MarketArgs {
    #[arg(long, value_name = "FILE")]
    pub tree: PathBuf,
    #[arg(long, value_name = "SPEC")]
    pub payoff: String,
    /// unconstrained | interval:lo,hi | grid:tick,bound
    #[arg(long, default_value = "unconstrained")]
    pub constraint: String,
    /// terminal | fixed:N | nodes:a;b | spec:FILE
    #[arg(long, default_value = "terminal")]
    pub horizon: String,
    /// Liquidate holdings at the horizon.
    #[arg(long)]
    pub liquidate: bool,
}

#[derive(Args, Debug)]
pub struct PriceArgs {
    #[command(flatten)]
    pub market: MarketArgs,
    #[arg(long, default_value_t = 0)]
    pub anchor: usize,
}

#[derive(Args, Debug)]
pub struct ContrarianArgs {
    #[arg(long, value_name = "FILE")]
    pub tree: PathBuf,
    /// Portfolio JSON: `{"v0", "holdings", "horizon", "liquidated"}`.
    #[arg(long, value_name = "FILE")]
    pub portfolio: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub start: usize,
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    /// Run the debt-limited construction with `A,delta,m_hat`.
    #[arg(long, value_name = "A,DELTA,M")]
    pub debt_limit: Option<String>,
}

#[derive(Args, Debug)]
pub struct ArbitrageArgs {
    #[arg(long, value_name = "FILE")]
    pub tree: PathBuf,
    #[arg(long, default_value = "unconstrained")]
    pub constraint: String,
    #[arg(long, default_value = "terminal")]
    pub horizon: String,
    #[arg(long)]
    pub liquidate: bool,
    /// Largest number of evaluations; defaults to the node budget.
    #[arg(long)]
    pub budget: Option<u64>,
    /// Rebalancing times for paired holdings, e.g. `0,2,4`.
    #[arg(long, value_delimiter = ',')]
    pub tau: Vec<String>,
}

#[derive(Args, Debug)]
pub struct StoppedArgs {
    #[arg(long, value_name = "FILE")]
    pub tree: PathBuf,
    /// Stopping time, same grammar as `--horizon`.
    #[arg(long)]
    pub nu: String,
    #[command(flatten)]
    pub output: TreeOutput,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    pub suite: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub cases: usize,
    #[arg(long, default_value_t = 4)]
    pub depth: usize,
}

#[derive(Args, Debug)]
pub struct SampleMartArgs {
    #[arg(long, value_name = "FILE")]
    pub config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the path count in the config.
    #[arg(long)]
    pub n: Option<usize>,
    #[command(flatten)]
    pub output: TreeOutput,
}

fn numbers(s: &str, n: usize, what: &str) -> anyhow::Result<Vec<f64>> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("bad {what} `{s}`"))?;
    if v.len() != n {
        bail!("{what} `{s}` needs {n} comma-separated numbers");
    }
    Ok(v)
}

pub fn parse_constraint(s: &str) -> anyhow::Result<PortfolioConstraint> {
    let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
    match kind {
        "unconstrained" if rest.is_empty() => Ok(PortfolioConstraint::Unconstrained),
        "interval" => {
            let v = numbers(rest, 2, "interval")?;
            Ok(PortfolioConstraint::Interval { lo: v[0], hi: v[1] })
        }
        "grid" => {
            let v = numbers(rest, 2, "grid")?;
            Ok(PortfolioConstraint::Grid {
                tick: v[0],
                bound: v[1],
            })
        }
        _ => Err(anyhow!("unknown constraint `{s}`")),
    }
}

pub fn parse_debt_limit(s: &str) -> anyhow::Result<trajpace_core::market::DebtLimitConfig<f64>> {
    let v = numbers(s, 3, "debt limit")?;
    if v[2] < 0.0 || v[2].fract() != 0.0 {
        bail!("m_hat in `{s}` must be a nonnegative integer");
    }
    Ok(trajpace_core::market::DebtLimitConfig {
        a: v[0],
        delta: v[1],
        m_hat: v[2] as usize,
    })
}

/// `terminal`, `fixed:N`, `N`, `nodes:a;b`, or a JSON file given as
/// `spec:FILE` or a bare path.
pub fn parse_horizon(s: &str, inputs: &mut Inputs) -> anyhow::Result<StoppingTime> {
    if let Some(st) = parse_stopping_time(s) {
        return Ok(st);
    }
    let path = s.strip_prefix("spec:").or_else(|| s.strip_prefix("spec=")).unwrap_or(s);
    if !std::path::Path::new(path).exists() {
        bail!("`{s}` is neither a stopping-time spec nor a file");
    }
    inputs.json(path.as_ref())
}
