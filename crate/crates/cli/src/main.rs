mod commands;
mod config;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "evo-ldp", version, about = "Stochastic evolutionary dynamics and their large deviations")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand. Each one overrides the matching field of
/// `--config`.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON experiment config (`schema_version` 1).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Game JSON file, or a built-in name: `congestion`, `two-links`.
    #[arg(long, global = true)]
    pub game: Option<String>,
    /// Protocol shorthand (`logit:0.25`, `pairwise_logit:0.5`,
    /// `imitation_mutation:0.1`) or JSON.
    #[arg(long, global = true)]
    pub protocol: Option<String>,
    /// How revising agents evaluate payoffs.
    #[arg(long, global = true, value_enum)]
    pub evaluation: Option<EvalArg>,
    #[arg(long = "pop-size", global = true)]
    pub pop_size: Option<u32>,
    #[arg(long, global = true)]
    pub horizon: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads. `EVO_LDP_WORKERS` takes precedence.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Simplex mesh resolution.
    #[arg(long, global = true)]
    pub mesh: Option<u32>,
    /// Logit noise level.
    #[arg(long, global = true)]
    pub eta: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EvalArg {
    Simple,
    Clever,
    Limit,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one path of the revision chain.
    Simulate {
        /// Initial state, comma separated; rounded to the N-grid.
        #[arg(long)]
        start: Option<String>,
    },
    /// Integrate the mean dynamic.
    MeanDynamic {
        /// Initial state, comma separated.
        #[arg(long)]
        start: Option<String>,
        #[arg(long)]
        dt: Option<f64>,
        /// Integrate backward in time.
        #[arg(long)]
        reverse: bool,
    },
    /// Locate a rest point of the mean dynamic.
    RestPoint {
        /// Where the search starts; the barycenter when absent.
        #[arg(long)]
        start: Option<String>,
    },
    /// Cramér transform L(x, z) of the increment law at x.
    Cramer {
        /// The state x, comma separated.
        #[arg(long)]
        start: Option<String>,
        /// Increment direction z, comma separated.
        #[arg(long)]
        direction: Option<String>,
        /// Check with the primal solver instead of the dual.
        #[arg(long)]
        primal: bool,
    },
    /// Cost of a path read from CSV (`time,x1,..,xn`, as written by
    /// `simulate` or `mean-dynamic`).
    PathCost {
        #[arg(long)]
        path: Option<String>,
    },
    /// Monte Carlo exit time from an L1 ball.
    ExitTime {
        /// Ball center; the logit rest point when absent.
        #[arg(long)]
        start: Option<String>,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        replicas: Option<usize>,
        /// Clock time after which a replica is censored.
        #[arg(long)]
        cap: Option<f64>,
    },
    /// Stationary distribution on the N-grid.
    Stationary,
    /// Finite-N decay rates against the closed-form costs for logit choice.
    RateCompare {
        /// Comma separated population sizes.
        #[arg(long = "pop-sizes")]
        pop_sizes: Option<String>,
        /// Target states for stationary rates, `;` separated.
        #[arg(long)]
        states: Option<String>,
        #[arg(long)]
        delta: Option<f64>,
        /// Compare exit times from a ball of this radius instead.
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long)]
        cap: Option<f64>,
    },
    /// Laplace values by dynamic programming against the variational limit.
    LaplaceDp {
        #[arg(long = "pop-sizes")]
        pop_sizes: Option<String>,
        /// Initial state, rounded to each N-grid.
        #[arg(long)]
        start: Option<String>,
        /// Point y of the terminal reward -kappa |x - y|^2.
        #[arg(long)]
        target: Option<String>,
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long)]
        knots: Option<usize>,
        #[arg(long)]
        restarts: Option<usize>,
    },
    /// Logit potential on a simplex mesh.
    Levelsets,
    /// Quick invariant checks; exits nonzero on any failure.
    Verify,
}

fn setup_workers(flag: Option<usize>) -> Result<()> {
    let workers = match std::env::var("EVO_LDP_WORKERS") {
        Ok(v) => Some(v.trim().parse::<usize>().with_context(|| format!("EVO_LDP_WORKERS={v}"))?),
        Err(_) => flag,
    };
    if let Some(w) = workers {
        anyhow::ensure!(w >= 1, "need at least one worker");
        rayon::ThreadPoolBuilder::new().num_threads(w).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    setup_workers(cli.common.workers)?;
    if let Command::Verify = cli.command {
        return Ok(verify::run());
    }
    let mut ctx = commands::Ctx::new(cli.common)?;
    match cli.command {
        Command::Simulate { start } => commands::simulate(&mut ctx, start)?,
        Command::MeanDynamic { start, dt, reverse } => commands::mean_dynamic(&mut ctx, start, dt, reverse)?,
        Command::RestPoint { start } => commands::rest_point(&mut ctx, start)?,
        Command::Cramer {
            start,
            direction,
            primal,
        } => commands::cramer(&mut ctx, start, direction, primal)?,
        Command::PathCost { path } => commands::path_cost(&mut ctx, path)?,
        Command::ExitTime {
            start,
            radius,
            replicas,
            cap,
        } => commands::exit_time(&mut ctx, start, radius, replicas, cap)?,
        Command::Stationary => commands::stationary(&mut ctx)?,
        Command::RateCompare {
            pop_sizes,
            states,
            delta,
            radius,
            replicas,
            cap,
        } => commands::rate_compare(&mut ctx, pop_sizes, states, delta, radius, replicas, cap)?,
        Command::LaplaceDp {
            pop_sizes,
            start,
            target,
            kappa,
            knots,
            restarts,
        } => commands::laplace_dp(&mut ctx, pop_sizes, start, target, kappa, knots, restarts)?,
        Command::Levelsets => commands::levelsets(&mut ctx)?,
        Command::Verify => unreachable!(),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
