use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "spillover", version = env!("SPILLOVER_VERSION"), about = "Knowledge-spillover mean field game solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the equilibrium for one network; writes per-sector CSVs and a summary.
    Solve(SolveArgs),
    /// Re-solve while varying one parameter over a list of values.
    Sweep(SweepArgs),
    /// Solve the reference networks and compare a sector's densities, or
    /// generate a random network document.
    Networks(NetworksArgs),
    /// Solve a batch of random networks and tabulate per-sector outcomes.
    Ensemble(EnsembleArgs),
    /// Fit the spillover regressions to an ensemble table.
    Regress(RegressArgs),
    /// Run the finite-firm particle system under the equilibrium policy.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Cap on worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args, Clone)]
pub struct ModelArgs {
    /// Parameter document (TOML).
    #[arg(long)]
    pub params: PathBuf,
    /// Number of grid nodes.
    #[arg(long, default_value_t = 401)]
    pub grid: usize,
    /// Hold the price constant B at this value, overriding price_mode.
    #[arg(long)]
    pub fixed_b: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args, Clone)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 1e-10)]
    pub newton_tol: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub fixed_point_tol: f64,
    #[arg(long, default_value_t = 100)]
    pub max_newton_iters: usize,
    #[arg(long, default_value_t = 500)]
    pub max_fixed_point_iters: usize,
    #[arg(long, default_value_t = 1.0)]
    pub damping: f64,
}

impl SolverArgs {
    pub fn options(&self) -> spillover_core::model::SolverOptions {
        spillover_core::model::SolverOptions {
            newton_tol: self.newton_tol,
            fixed_point_tol: self.fixed_point_tol,
            max_newton_iters: self.max_newton_iters,
            max_fixed_point_iters: self.max_fixed_point_iters,
            damping: self.damping,
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Network document (JSON), or `canonical:<id>` / `single:<p>`.
    #[arg(long)]
    pub network: String,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub network: String,
    /// Parameter to vary: sigma, wage (w), discount (rho), gamma or alpha.
    #[arg(long)]
    pub vary: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    pub values: Vec<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct NetworksArgs {
    /// Required unless --random-sectors is given.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, default_value_t = 401)]
    pub grid: usize,
    #[arg(long)]
    pub fixed_b: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Reference network ids to solve.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub ids: Vec<usize>,
    /// Sector (1-based) whose densities are compared between consecutive ids.
    #[arg(long, default_value_t = 3)]
    pub sector: usize,
    /// Instead of solving, write a random network with this many sectors.
    #[arg(long)]
    pub random_sectors: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub prob: f64,
    #[arg(long, default_value_t = 3.0)]
    pub weight_max: f64,
    #[arg(long, value_enum, default_value_t = WeightsArg::Equal)]
    pub sector_weights: WeightsArg,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightsArg {
    Equal,
    Random,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 100)]
    pub runs: usize,
    #[arg(long, default_value_t = 3)]
    pub sectors: usize,
    /// Fixed connection probability; omit to draw it from U[prob_low, prob_high] per run.
    #[arg(long)]
    pub prob: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub prob_low: f64,
    #[arg(long, default_value_t = 1.0)]
    pub prob_high: f64,
    #[arg(long, default_value_t = 3.0)]
    pub weight_max: f64,
    #[arg(long, value_enum, default_value_t = WeightsArg::Equal)]
    pub sector_weights: WeightsArg,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct RegressArgs {
    /// Directory written by `ensemble` (reads ensemble.csv and runs.json).
    #[arg(long)]
    pub ensemble: PathBuf,
    /// Parameter document; supplies z_max and, with --curve, the model.
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long, default_value_t = 401)]
    pub grid: usize,
    #[arg(long)]
    pub fixed_b: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Also fit the k -> mean curve on these coupling values.
    #[arg(long, value_delimiter = ',')]
    pub curve: Vec<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub network: String,
    /// Firms per sector.
    #[arg(long, default_value_t = 1000)]
    pub firms: usize,
    #[arg(long, default_value_t = 60.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    #[arg(long, default_value_t = 40)]
    pub bins: usize,
    #[command(flatten)]
    pub common: Common,
}
