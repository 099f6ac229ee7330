//! `cfmm-router` command-line front end.
//!
//! Exit codes: 0 on success, 1 on bad input, 2 when the solver does not
//! converge, 3 when the dual is unbounded.

mod bench;
mod route;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Parser, Subcommand, ValueEnum};

use cfmm_router::generate;
use cfmm_router::SolverConfig;

#[derive(Debug, Parser)]
#[command(
    name = "cfmm-router",
    version,
    about = "Optimal trade routing across CFMMs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ObjectiveKind {
    Arbitrage,
    Liquidate,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve a routing problem on a market snapshot.
    Route {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long, value_enum)]
        objective: ObjectiveKind,
        /// Reference prices for arbitrage; defaults to the snapshot's prices.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        prices: Option<Vec<f64>>,
        /// Amounts tendered for liquidation, one per asset.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        basket: Option<Vec<f64>>,
        /// Asset received for liquidation, by index or symbol.
        #[arg(long)]
        out_token: Option<String>,
        #[arg(long)]
        max_iter: Option<usize>,
        /// Tolerance on the projected dual gradient.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a random market snapshot.
    Gen {
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = generate::DEFAULT_FEE)]
        fee: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time arbitrage solves on generated instances and write CSV.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "16,100,1024")]
        m_list: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        /// Compare against the primal oracle on instances with at most 10 markets.
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure with the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    Input(anyhow::Error),
    NotConverged,
    Unbounded(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::NotConverged => 2,
            Failure::Unbounded(_) => 3,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

/// Solver settings with `ROUTER_THREADS` applied.
pub fn base_config() -> Result<SolverConfig, Failure> {
    let mut config = SolverConfig::default();
    if let Ok(v) = std::env::var("ROUTER_THREADS") {
        let k: usize = v
            .trim()
            .parse()
            .map_err(|_| anyhow!("ROUTER_THREADS must be a positive integer, got {v:?}"))?;
        if k == 0 {
            return Err(anyhow!("ROUTER_THREADS must be positive").into());
        }
        config.threads = Some(k);
    }
    Ok(config)
}

/// Writes `text` to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => {
            std::fs::write(p, text).map_err(|e| anyhow!("cannot write {}: {e}", p.display()))?
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Route {
            snapshot,
            objective,
            prices,
            basket,
            out_token,
            max_iter,
            tol,
            out,
        } => route::run(route::RouteArgs {
            snapshot,
            objective,
            prices,
            basket,
            out_token,
            max_iter,
            tol,
            out,
        }),
        Command::Gen { m, seed, fee, out } => {
            if m == 0 {
                return Err(anyhow!("--m must be at least 1").into());
            }
            let snap = generate::random_instance(m, seed, fee)
                .map_err(|e| anyhow!("cannot generate instance: {e}"))?;
            let text = snap
                .to_json()
                .map_err(|e| anyhow!("cannot serialize snapshot: {e}"))?;
            emit(out.as_deref(), &text)
        }
        Command::Bench {
            m_list,
            seed,
            reps,
            oracle,
            out,
        } => bench::run(&m_list, seed, reps.max(1), oracle, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Input(e) => eprintln!("error: {e}"),
                Failure::NotConverged => eprintln!("error: solver did not converge"),
                Failure::Unbounded(e) => eprintln!("error: {e}"),
            }
            ExitCode::from(f.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failures_map_to_exit_codes() {
        assert_eq!(Failure::Input(anyhow!("x")).code(), 1);
        assert_eq!(Failure::NotConverged.code(), 2);
        assert_eq!(Failure::Unbounded(anyhow!("x")).code(), 3);
    }
}
