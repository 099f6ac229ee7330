//! The dual function `g(nu) = Ubar(nu) + sum_i arb_i(A_i^T nu)` and its
//! minimization.
//!
//! The gradient of `arb_i` at local prices is the optimal trade `Delta_i*`,
//! so `grad g = grad Ubar + sum_i A_i Delta_i*`. At a minimizer the per-market
//! trades summed over the network are the routed trade.

pub mod lbfgsb;

use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::markets::{ArbResult, MarketError};
use crate::network::{NetworkError, NetworkTrade, Trade};
use crate::objectives::{Objective, ObjectiveError, PRICE_FLOOR};
use crate::snapshot::MarketSnapshot;

/// Feasibility slack, relative to the price scale, used when reporting the
/// utility of the recovered trade.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("dual is unbounded: market {market} admits unbounded arbitrage ({source})")]
    Unbounded { market: usize, source: MarketError },
    #[error("market {market} failed: {source}")]
    Market { market: usize, source: MarketError },
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("worker pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Projected-gradient tolerance; `None` means `1e-8 * max(1, ||nu0||_inf)`.
    pub gradient_tolerance: Option<f64>,
    pub memory: usize,
    pub parallel: bool,
    /// Worker cap for parallel evaluation; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance: None,
            memory: 10,
            parallel: true,
            threads: None,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<(), SolverError> {
        if self.max_iterations == 0 || self.memory == 0 || self.threads == Some(0) {
            return Err(SolverError::Config(
                "iteration cap, memory and thread count must be positive".into(),
            ));
        }
        if let Some(t) = self.gradient_tolerance {
            if !(t > 0.0 && t.is_finite()) {
                return Err(SolverError::Config(format!("gradient tolerance {t}")));
            }
        }
        Ok(())
    }
}

/// The dual function and its gradient at one point.
#[derive(Debug, Clone)]
pub struct DualIterate {
    pub nu: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub arbs: Vec<ArbResult>,
}

#[derive(Debug, Clone)]
pub struct RoutingSolution {
    pub nu: Vec<f64>,
    pub psi: NetworkTrade,
    pub trades: Vec<Trade>,
    pub dual_value: f64,
    /// `U(psi)`, `-inf` if `psi` violates the objective's constraints by more
    /// than the feasibility slack.
    pub utility: f64,
    /// `||-grad Ubar(nu) - sum_i A_i Delta_i||_inf` at the final prices.
    pub coupling_residual: f64,
    /// `||nu - P(nu - grad g)||_inf` at the final prices.
    pub projected_gradient: f64,
    pub gradient_tolerance: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time: Duration,
    /// Dual value of every accepted iterate.
    pub history: Vec<f64>,
}

impl RoutingSolution {
    pub fn duality_gap(&self) -> f64 {
        self.dual_value - self.utility
    }
}

fn arb_all(
    snapshot: &MarketSnapshot,
    nu: &[f64],
    parallel: bool,
) -> Result<Vec<ArbResult>, SolverError> {
    let solve = |(i, m): (usize, &crate::markets::Market)| -> Result<ArbResult, SolverError> {
        let local = m.tokens().gather(nu)?;
        m.find_arb(&local).map_err(|source| match source {
            MarketError::Unbounded(_) => SolverError::Unbounded { market: i, source },
            source => SolverError::Market { market: i, source },
        })
    };
    if parallel {
        snapshot.markets.par_iter().enumerate().map(solve).collect()
    } else {
        snapshot.markets.iter().enumerate().map(solve).collect()
    }
}

/// Evaluates `g(nu)` and its gradient. The reduction runs in market order,
/// so the result does not depend on `parallel`.
pub fn eval_dual(
    snapshot: &MarketSnapshot,
    obj: &Objective,
    nu: &[f64],
    parallel: bool,
) -> Result<DualIterate, SolverError> {
    let n = snapshot.n_assets();
    if nu.len() != n {
        return Err(NetworkError::Dimension {
            expected: n,
            got: nu.len(),
        }
        .into());
    }
    let mut value = obj.conjugate(nu);
    let mut grad = obj.conjugate_gradient(nu)?;
    let arbs = arb_all(snapshot, nu, parallel)?;
    for (m, arb) in snapshot.markets.iter().zip(&arbs) {
        value += arb.objective_value;
        m.tokens().scatter_add(&arb.trade.signed(), &mut grad)?;
    }
    Ok(DualIterate {
        nu: nu.to_vec(),
        value,
        grad,
        arbs,
    })
}

/// Box on `nu`: the objective's bounds with a positive floor.
pub fn dual_bounds(obj: &Objective) -> (Vec<f64>, Vec<f64>) {
    let (mut lower, upper) = obj.bounds();
    for l in lower.iter_mut() {
        *l = l.max(PRICE_FLOOR);
    }
    (lower, upper)
}

/// Starting prices: `c` for arbitrage; for liquidation the geometric mean of
/// the spot prices of each token against the out token, else 1.
pub fn initial_point(obj: &Objective, snapshot: &MarketSnapshot) -> Vec<f64> {
    let (lower, upper) = dual_bounds(obj);
    let mut nu = match obj {
        Objective::TotalArbitrage(o) => o.prices.clone(),
        Objective::BasketLiquidation(o) => {
            let t = o.out_token;
            let n = snapshot.n_assets();
            let mut log_sum = vec![0.0; n];
            let mut count = vec![0usize; n];
            for m in &snapshot.markets {
                let idx = m.tokens().indices();
                for input in 0..2 {
                    if idx[1 - input] == t && idx[input] != t {
                        let p = m.spot_price(input);
                        if p > 0.0 && p.is_finite() {
                            log_sum[idx[input]] += p.ln();
                            count[idx[input]] += 1;
                        }
                    }
                }
            }
            (0..n)
                .map(|j| {
                    if j == t || count[j] == 0 {
                        1.0
                    } else {
                        (log_sum[j] / count[j] as f64).exp()
                    }
                })
                .collect()
        }
    };
    lbfgsb::project(&mut nu, &lower, &upper);
    nu
}

/// Solves the routing problem through its dual.
pub fn solve(
    snapshot: &MarketSnapshot,
    obj: &Objective,
    config: &SolverConfig,
) -> Result<RoutingSolution, SolverError> {
    config.validate()?;
    obj.validate(snapshot.n_assets())?;
    match config.threads {
        Some(k) if config.parallel => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| SolverError::ThreadPool(e.to_string()))?
            .install(|| solve_inner(snapshot, obj, config)),
        _ => solve_inner(snapshot, obj, config),
    }
}

fn solve_inner(
    snapshot: &MarketSnapshot,
    obj: &Objective,
    config: &SolverConfig,
) -> Result<RoutingSolution, SolverError> {
    let start = Instant::now();
    let (lower, upper) = dual_bounds(obj);
    let nu0 = initial_point(obj, snapshot);
    let scale = nu0.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = config.gradient_tolerance.unwrap_or(1e-8 * scale);
    let opts = lbfgsb::Options {
        max_iterations: config.max_iterations,
        gradient_tolerance: tol,
        memory: config.memory,
    };
    let outcome = lbfgsb::minimize(
        |nu| eval_dual(snapshot, obj, nu, config.parallel).map(|it| (it.value, it.grad)),
        &nu0,
        &lower,
        &upper,
        &opts,
    )?;

    let last = eval_dual(snapshot, obj, &outcome.x, config.parallel)?;
    let trades: Vec<Trade> = last.arbs.into_iter().map(|a| a.trade).collect();
    let psi = snapshot.net_trade(&trades)?;
    let utility = obj.utility(&psi.psi, FEASIBILITY_TOL * scale);
    let coupling_residual = last.grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let projected_gradient = lbfgsb::projected_gradient_norm(&last.nu, &last.grad, &lower, &upper);
    Ok(RoutingSolution {
        nu: last.nu,
        psi,
        trades,
        dual_value: last.value,
        utility,
        coupling_residual,
        projected_gradient,
        gradient_tolerance: tol,
        iterations: outcome.iterations,
        converged: outcome.converged,
        wall_time: start.elapsed(),
        history: outcome.history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markets::{GeomMeanMarket, GeomMeanPool, Market};
    use crate::network::{AssetUniverse, TokenMap};

    fn pool(a: usize, b: usize, reserves: [f64; 2], fee: f64) -> Market {
        Market::GeomMean(
            GeomMeanMarket::new(
                GeomMeanPool::product(reserves, fee).unwrap(),
                TokenMap::pair(a, b).unwrap(),
            )
            .unwrap(),
        )
    }

    fn snapshot(n: usize, markets: Vec<Market>) -> MarketSnapshot {
        MarketSnapshot::new(AssetUniverse::numbered(n).unwrap(), markets).unwrap()
    }

    #[test]
    fn empty_network_dual() {
        let snap = snapshot(2, vec![]);
        let obj = Objective::arbitrage(vec![1.0, 2.0]);
        let it = eval_dual(&snap, &obj, &[1.0, 2.0], true).unwrap();
        assert_eq!(it.value, 0.0);
        assert_eq!(it.grad, vec![0.0, 0.0]);
    }

    #[test]
    fn dual_inside_spread_is_conjugate() {
        let snap = snapshot(2, vec![pool(0, 1, [100.0, 100.0], 0.997)]);
        let obj = Objective::liquidate(vec![3.0, 0.0], 1);
        let it = eval_dual(&snap, &obj, &[1.0, 1.0], false).unwrap();
        assert_eq!(it.value, 3.0);
        assert_eq!(it.grad, vec![3.0, 0.0]);
    }

    #[test]
    fn single_pool_arbitrage() {
        let snap = snapshot(2, vec![pool(0, 1, [100.0, 100.0], 1.0)]);
        let obj = Objective::arbitrage(vec![1.0, 2.0]);
        // At nu = c the dual term is the closed-form arbitrage against c.
        let first = eval_dual(&snap, &obj, &[1.0, 2.0], false).unwrap();
        let d = 100.0 * (2f64.sqrt() - 1.0);
        let out = 100.0 - 100.0 / 2f64.sqrt();
        let t = &first.arbs[0].trade;
        assert!((t.tendered[0] - d).abs() <= 1e-12 * d);
        assert!((t.received[1] - out).abs() <= 1e-12 * out);
        assert!((first.value - 17.157).abs() < 1e-3);
        // One pool cannot produce a nonnegative nonzero basket, so the dual
        // moves nu into the pool's spread and the routed utility is 0.
        let sol = solve(&snap, &obj, &SolverConfig::default()).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.history[0], first.value);
        assert!((sol.nu[0] / sol.nu[1] - 1.0).abs() < 1e-8);
        assert!(sol.nu[0] >= 1.0 && sol.nu[1] >= 2.0);
        assert!(sol.utility.abs() <= 1e-8 && sol.dual_value.abs() <= 1e-8);
    }

    #[test]
    fn two_pool_cycle_arbitrage() {
        // Token 1 is cheap in the first pool and dear in the second.
        let snap = snapshot(
            2,
            vec![
                pool(0, 1, [100.0, 200.0], 0.997),
                pool(0, 1, [200.0, 100.0], 0.997),
            ],
        );
        let obj = Objective::arbitrage(vec![1.0, 1.0]);
        let sol = solve(&snap, &obj, &SolverConfig::default()).unwrap();
        assert!(sol.converged);
        assert!(sol.utility > 1.0);
        assert!(sol.psi.psi.iter().all(|p| *p >= -1e-6));
        assert!(sol.duality_gap() >= -1e-9);
        assert!(sol.duality_gap() <= 1e-5 * sol.dual_value.abs().max(1.0));
    }

    #[test]
    fn clearing_prices_need_no_iterations() {
        let snap = snapshot(
            3,
            vec![
                pool(0, 1, [100.0, 200.0], 0.997),
                pool(1, 2, [50.0, 50.0], 0.997),
            ],
        );
        let obj = Objective::arbitrage(vec![2.0, 1.0, 1.0]);
        let sol = solve(&snap, &obj, &SolverConfig::default()).unwrap();
        assert!(sol.converged);
        assert!(sol.iterations <= 2);
        assert!(sol.trades.iter().all(|t| t.is_zero()));
        assert_eq!(sol.utility, 0.0);
    }

    #[test]
    fn initial_points() {
        let snap = snapshot(3, vec![pool(0, 2, [100.0, 300.0], 1.0)]);
        let arb = Objective::arbitrage(vec![1.0, 2.0, 0.0]);
        assert_eq!(initial_point(&arb, &snap), vec![1.0, 2.0, PRICE_FLOOR]);
        let liq = Objective::liquidate(vec![1.0, 1.0, 0.0], 2);
        let nu0 = initial_point(&liq, &snap);
        assert!((nu0[0] - 3.0).abs() < 1e-12);
        assert_eq!(nu0[1], 1.0);
        assert_eq!(nu0[2], 1.0);
        // Quoted the other way round.
        let snap = snapshot(2, vec![pool(1, 0, [300.0, 100.0], 1.0)]);
        let liq = Objective::liquidate(vec![1.0, 0.0], 1);
        assert!((initial_point(&liq, &snap)[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn triangle_liquidation_routes_through_middle() {
        let snap = snapshot(
            3,
            vec![
                pool(0, 1, [1000.0, 1000.0], 0.997),
                pool(1, 2, [1000.0, 1000.0], 0.997),
            ],
        );
        let obj = Objective::liquidate(vec![10.0, 0.0, 0.0], 2);
        let sol = solve(&snap, &obj, &SolverConfig::default()).unwrap();
        assert!(sol.converged);
        assert!((sol.trades[0].tendered[0] - 10.0).abs() < 1e-6);
        let mid = sol.trades[0].received[1];
        assert!((sol.trades[1].tendered[0] - mid).abs() < 1e-6 * mid);
        assert!(sol.utility > 9.0 && sol.utility < 10.0);
        assert!(sol.duality_gap() >= -1e-9);
        assert!(sol.duality_gap() <= 1e-5 * sol.dual_value.max(1.0));
    }

    #[test]
    fn liquidation_into_an_isolated_token_yields_nothing() {
        // Prices of the other tokens fall to the bound at very different rates.
        let snap = crate::generate::random_instance(10, 7544, 0.997).unwrap();
        assert!(snap
            .markets
            .iter()
            .all(|m| !m.tokens().indices().contains(&0)));
        let basket = (0..snap.n_assets()).map(|j| 5.0 * j as f64).collect();
        let sol = solve(
            &snap,
            &Objective::liquidate(basket, 0),
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(sol.converged);
        assert_eq!(sol.psi.psi[0], 0.0);
        assert!(sol.dual_value < 1e-5, "{}", sol.dual_value);
    }

    #[test]
    fn parallel_and_serial_are_bit_identical() {
        let markets = (0..40)
            .map(|i| {
                pool(
                    i % 5,
                    (i + 1 + i / 5) % 6,
                    [1000.0 + i as f64, 1500.0 - i as f64],
                    0.997,
                )
            })
            .filter(|m| m.tokens().indices()[0] != m.tokens().indices()[1])
            .collect();
        let snap = snapshot(6, markets);
        let obj = Objective::arbitrage(vec![0.3, 0.9, 0.5, 0.7, 0.2, 0.6]);
        let a = solve(&snap, &obj, &SolverConfig::default()).unwrap();
        let b = solve(
            &snap,
            &obj,
            &SolverConfig {
                parallel: false,
                ..SolverConfig::default()
            },
        )
        .unwrap();
        let c = solve(
            &snap,
            &obj,
            &SolverConfig {
                threads: Some(2),
                ..SolverConfig::default()
            },
        )
        .unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.nu, b.nu);
        assert_eq!(a.history, c.history);
        assert_eq!(a.nu, c.nu);
    }

    #[test]
    fn scaling_valuation_scales_dual_value() {
        let snap = snapshot(
            3,
            vec![
                pool(0, 1, [100.0, 100.0], 0.997),
                pool(1, 2, [100.0, 300.0], 0.997),
                pool(0, 2, [100.0, 100.0], 0.997),
            ],
        );
        let c = vec![1.0, 1.3, 0.2];
        let a = solve(
            &snap,
            &Objective::arbitrage(c.clone()),
            &SolverConfig::default(),
        )
        .unwrap();
        let b = solve(
            &snap,
            &Objective::arbitrage(c.iter().map(|v| 3.0 * v).collect()),
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(a.converged && b.converged);
        assert!((b.dual_value - 3.0 * a.dual_value).abs() <= 1e-6 * b.dual_value);
        for (ta, tb) in a.trades.iter().zip(&b.trades) {
            for (x, y) in ta.signed().iter().zip(tb.signed()) {
                assert!((x - y).abs() <= 1e-5 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn bad_config() {
        let snap = snapshot(2, vec![]);
        let obj = Objective::arbitrage(vec![1.0, 1.0]);
        let cfg = SolverConfig {
            memory: 0,
            ..SolverConfig::default()
        };
        assert!(matches!(
            solve(&snap, &obj, &cfg),
            Err(SolverError::Config(_))
        ));
        let obj = Objective::arbitrage(vec![1.0, 1.0, 1.0]);
        assert!(matches!(
            solve(&snap, &obj, &SolverConfig::default()),
            Err(SolverError::Objective(_))
        ));
    }
}
