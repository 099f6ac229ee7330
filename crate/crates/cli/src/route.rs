use std::path::PathBuf;

use anyhow::anyhow;
use serde::Serialize;

use cfmm_router::{solver, MarketSnapshot, Objective, RoutingSolution, SolverError};

use crate::{base_config, emit, Failure, ObjectiveKind};

pub struct RouteArgs {
    pub snapshot: PathBuf,
    pub objective: ObjectiveKind,
    pub prices: Option<Vec<f64>>,
    pub basket: Option<Vec<f64>>,
    pub out_token: Option<String>,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct TradeOut<'a> {
    market: usize,
    tendered: &'a [f64],
    received: &'a [f64],
}

#[derive(Serialize)]
struct Output<'a> {
    nu: &'a [f64],
    psi: &'a [f64],
    trades: Vec<TradeOut<'a>>,
    /// `None` serializes as `null` when the recovered trade is infeasible.
    utility: Option<f64>,
    dual_value: f64,
    iterations: usize,
    converged: bool,
    wall_time_ms: f64,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn objective(args: &RouteArgs, snap: &MarketSnapshot) -> anyhow::Result<Objective> {
    let obj = match args.objective {
        ObjectiveKind::Arbitrage => {
            let prices = match (&args.prices, &snap.prices) {
                (Some(p), _) => p.clone(),
                (None, Some(p)) => p.clone(),
                (None, None) => {
                    return Err(anyhow!(
                        "arbitrage needs --prices or prices in the snapshot"
                    ))
                }
            };
            Objective::arbitrage(prices)
        }
        ObjectiveKind::Liquidate => {
            let basket = args
                .basket
                .clone()
                .ok_or_else(|| anyhow!("liquidation needs --basket"))?;
            let token = args
                .out_token
                .as_deref()
                .ok_or_else(|| anyhow!("liquidation needs --out-token"))?;
            let out = match token.parse::<usize>() {
                Ok(i) => i,
                Err(_) => snap
                    .universe
                    .index_of(token)
                    .ok_or_else(|| anyhow!("unknown token {token:?}"))?,
            };
            Objective::liquidate(basket, out)
        }
    };
    obj.validate(snap.n_assets())?;
    Ok(obj)
}

fn render(sol: &RoutingSolution) -> anyhow::Result<String> {
    let out = Output {
        nu: &sol.nu,
        psi: &sol.psi.psi,
        trades: sol
            .trades
            .iter()
            .enumerate()
            .map(|(market, t)| TradeOut {
                market,
                tendered: &t.tendered,
                received: &t.received,
            })
            .collect(),
        utility: finite(sol.utility),
        dual_value: sol.dual_value,
        iterations: sol.iterations,
        converged: sol.converged,
        wall_time_ms: sol.wall_time.as_secs_f64() * 1e3,
    };
    Ok(serde_json::to_string_pretty(&out)?)
}

pub fn run(args: RouteArgs) -> Result<(), Failure> {
    let snap = MarketSnapshot::load(&args.snapshot)
        .map_err(|e| anyhow!("cannot load {}: {e}", args.snapshot.display()))?;
    let obj = objective(&args, &snap)?;
    let mut config = base_config()?;
    if let Some(k) = args.max_iter {
        config.max_iterations = k;
    }
    config.gradient_tolerance = args.tol;
    let sol = match solver::solve(&snap, &obj, &config) {
        Ok(sol) => sol,
        Err(e @ SolverError::Unbounded { .. }) => return Err(Failure::Unbounded(e.into())),
        Err(e) => return Err(Failure::Input(e.into())),
    };
    emit(args.out.as_deref(), &render(&sol)?)?;
    if sol.converged {
        Ok(())
    } else {
        Err(Failure::NotConverged)
    }
}
