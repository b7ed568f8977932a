use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "netspill",
    version,
    about = "Spillover effect estimation on mismeasured networks"
)]
pub struct Cli {
    /// Worker threads for fits, bootstrap and simulation. Outputs do not
    /// depend on it.
    #[arg(long, global = true, env = "NETSPILL_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Horvitz-Thompson estimates treating the observed network as true.
    Ht(HtArgs),
    /// EM fit of the mismeasured-network mixture model.
    Fit(FitArgs),
    /// Simulation grid over edge-drop and false-edge rates.
    Simulate(SimulateArgs),
    /// Expected Horvitz-Thompson estimate on an observed network when
    /// outcomes follow a true network.
    BiasOracle(BiasOracleArgs),
}

#[derive(Debug, Args)]
pub struct HtArgs {
    /// CSV with columns `node,treatment,outcome`.
    #[arg(long)]
    pub design: PathBuf,
    /// CSV with columns `src,dst[,stratum]` naming nodes of the design.
    #[arg(long)]
    pub graph: PathBuf,
    /// Probability each subject was assigned to treatment.
    #[arg(long)]
    pub assign_prob: f64,
    /// Output directory; results go to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Gaussian,
    Binomial,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub design: PathBuf,
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub assign_prob: f64,
    /// Fit configuration JSON (`fit`, `prior`, `tail_mass`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    /// Trials per subject for the binomial family.
    #[arg(long)]
    pub trials: Option<u32>,
    /// Separate within-group and between-group pairs; needs a `group`
    /// column in the design file.
    #[arg(long)]
    pub stratified: bool,
    /// Parametric bootstrap replicates.
    #[arg(long, value_name = "M")]
    pub bootstrap: Option<usize>,
    #[arg(long, value_name = "S")]
    pub seed: Option<u64>,
    /// Also write the posterior responsibilities (requires `--out`).
    #[arg(long)]
    pub responsibilities: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Protocol JSON (`networks`, `settings`).
    pub protocol: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_name = "S")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct BiasOracleArgs {
    /// CSV with columns `src,dst[,stratum]`.
    #[arg(long)]
    pub true_graph: PathBuf,
    #[arg(long)]
    pub observed_graph: PathBuf,
    /// CSV with `node` and one column per condition name.
    #[arg(long)]
    pub potential: PathBuf,
    #[arg(long)]
    pub assign_prob: f64,
    /// Monte Carlo assignments above the exact-enumeration size.
    #[arg(long, default_value_t = 100_000)]
    pub draws: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
