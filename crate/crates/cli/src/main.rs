use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod config;

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "bassmt", version, about = "Bass martingales between measures in convex order")]
struct Cli {
    /// Worker threads (defaults to all cores)
    #[arg(long, global = true, env = "BASSMT_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
pub struct SolverArgs {
    /// Integration rule: gh:<nodes per axis> or mc:<samples>:<seed>
    #[arg(long)]
    quad: Option<String>,
    #[arg(long, default_value_t = 1e-4)]
    tol_marginal: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol_barycenter: f64,
    #[arg(long)]
    damping: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Atoms used for quantile-specified marginals
    #[arg(long, default_value_t = 513)]
    grid_size: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve for the Bass martingale between two measures given as CSV
    Solve {
        #[arg(long)]
        mu: PathBuf,
        #[arg(long)]
        nu: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
    },
    /// Sample martingale paths from a solution file
    Sample {
        #[arg(long)]
        solution: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        #[arg(long, default_value_t = 64)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
    },
    /// Run a named example end to end and tabulate target against achieved
    Reproduce {
        name: Example,
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        #[arg(long, default_value_t = 64)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Example {
    Circles,
    Arctan,
    Binary,
}

impl Example {
    pub fn name(self) -> &'static str {
        match self {
            Example::Circles => "circles",
            Example::Arctan => "arctan",
            Example::Binary => "binary",
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    let cfg = match cli.command {
        Command::Solve {
            mu,
            nu,
            solver,
            seed,
            out,
        } => RunConfig::solve(mu, nu, solver, seed, out),
        Command::Sample {
            solution,
            paths,
            steps,
            seed,
            out,
        } => RunConfig::sample(solution, paths, steps, seed, out),
        Command::Reproduce {
            name,
            paths,
            steps,
            seed,
            out,
        } => RunConfig::reproduce(name, paths, steps, seed, out),
    };
    ExitCode::from(commands::run(&cfg))
}
