//! Reference solvers for validating the dual method on small instances.
//!
//! Nothing here calls the market solvers. Outputs are recovered from the
//! trading functions by bisection, marginal rates from the trading-function
//! gradient, and the arbitrage and routing problems are solved by direct
//! search in the primal. Custom curves, which have no trading function, fall
//! back to their own forward functions.

use crate::markets::{Market, SwapCurve};
use crate::network::Trade;
use crate::objectives::Objective;
use crate::snapshot::MarketSnapshot;
use crate::ArbResult;

/// A two-asset pool described by its trading function.
#[derive(Clone)]
enum Piece {
    /// `log phi = w0 ln(R0 + o0) + w1 ln(R1 + o1)`; covers weighted
    /// geometric-mean pools and bounded product segments.
    Log {
        reserves: [f64; 2],
        weights: [f64; 2],
        offsets: [f64; 2],
        fee: f64,
    },
    /// `phi = A (R0 + R1) - 1 / (R0 R1)`.
    Curve2 {
        reserves: [f64; 2],
        amp: f64,
        fee: f64,
    },
    Custom(crate::markets::GenericCurve),
}

fn pieces(market: &Market) -> Vec<Piece> {
    match market {
        Market::GeomMean(m) => vec![Piece::Log {
            reserves: m.pool.reserves,
            weights: [m.pool.weight, 1.0 - m.pool.weight],
            offsets: [0.0, 0.0],
            fee: m.pool.fee,
        }],
        Market::BoundedProduct(m) => vec![Piece::Log {
            reserves: m.segment.reserves,
            weights: [1.0, 1.0],
            offsets: [m.segment.alpha, m.segment.beta],
            fee: m.segment.fee,
        }],
        Market::Aggregate(m) => m
            .segments()
            .iter()
            .map(|s| Piece::Log {
                reserves: s.reserves,
                weights: [1.0, 1.0],
                offsets: [s.alpha, s.beta],
                fee: s.fee,
            })
            .collect(),
        Market::GenericSwap(m) => match &m.curve {
            crate::markets::GenericCurve::Curve2(c) => vec![Piece::Curve2 {
                reserves: c.reserves,
                amp: c.amp,
                fee: c.fee,
            }],
            other => vec![Piece::Custom(other.clone())],
        },
    }
}

fn curve2_phi(amp: f64, r: [f64; 2]) -> f64 {
    amp * (r[0] + r[1]) - 1.0 / (r[0] * r[1])
}

/// Bisection for the largest root of a decreasing function on `[0, hi]`,
/// returning the feasible (nonnegative) side.
fn largest_feasible(mut g: impl FnMut(f64) -> f64, hi: f64) -> f64 {
    if g(hi) >= 0.0 {
        return hi;
    }
    let (mut a, mut b) = (0.0, hi);
    for _ in 0..300 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if g(m) >= 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    a
}

impl Piece {
    /// Output for tendering `amount` of local asset `input`.
    fn output(&self, input: usize, amount: f64) -> f64 {
        if amount <= 0.0 {
            return 0.0;
        }
        let out = 1 - input;
        match self {
            Piece::Log {
                reserves,
                weights,
                offsets,
                fee,
            } => {
                let a_in = reserves[input] + offsets[input];
                let a_out = reserves[out] + offsets[out];
                let gain = weights[input] * (fee * amount / a_in).ln_1p();
                largest_feasible(
                    |l| gain + weights[out] * (-l / a_out).ln_1p(),
                    reserves[out],
                )
            }
            Piece::Curve2 { reserves, amp, fee } => {
                let base = curve2_phi(*amp, *reserves);
                let hi = reserves[out] * (1.0 - 1e-15);
                largest_feasible(
                    |l| {
                        let mut r = *reserves;
                        r[input] += fee * amount;
                        r[out] -= l;
                        curve2_phi(*amp, r) - base
                    },
                    hi,
                )
            }
            Piece::Custom(c) => c.forward(input, amount),
        }
    }

    /// `f'(amount)` from the trading-function gradient at the post-trade
    /// reserves.
    fn marginal(&self, input: usize, amount: f64) -> f64 {
        let out = 1 - input;
        match self {
            Piece::Log {
                reserves,
                weights,
                offsets,
                fee,
            } => {
                let l = self.output(input, amount);
                if l >= reserves[out] && amount > 0.0 && self.drain_input(input) <= amount {
                    return 0.0;
                }
                let a_in = reserves[input] + offsets[input] + fee * amount.max(0.0);
                let a_out = reserves[out] + offsets[out] - l;
                fee * (weights[input] / a_in) / (weights[out] / a_out)
            }
            Piece::Curve2 { reserves, amp, fee } => {
                let l = self.output(input, amount);
                let mut r = *reserves;
                r[input] += fee * amount.max(0.0);
                r[out] -= l;
                let grad = |k: usize| amp + 1.0 / (r[k] * r[0] * r[1]);
                fee * grad(input) / grad(out)
            }
            Piece::Custom(c) => c.price_impact(input, amount),
        }
    }

    /// Input at which the output reserve is exhausted.
    fn drain_input(&self, input: usize) -> f64 {
        let out = 1 - input;
        match self {
            Piece::Log {
                reserves,
                weights,
                offsets,
                fee,
            } => {
                if reserves[out] == 0.0 {
                    return 0.0;
                }
                if offsets[out] == 0.0 {
                    return f64::INFINITY;
                }
                let a_in = reserves[input] + offsets[input];
                let a_out = reserves[out] + offsets[out];
                let loss = -weights[out] * (-reserves[out] / a_out).ln_1p();
                a_in / fee * (loss / weights[input]).exp_m1()
            }
            Piece::Curve2 { .. } => f64::INFINITY,
            Piece::Custom(c) => c.max_input(input),
        }
    }

    /// Local signed trade for the signed scalar `x`: `x > 0` tenders asset
    /// 0, `x < 0` tenders asset 1.
    fn trade(&self, x: f64) -> [f64; 2] {
        if x >= 0.0 {
            [-x, self.output(0, x)]
        } else {
            [self.output(1, -x), x]
        }
    }

    /// Right (`side = +1`) or left derivative of [`trade`](Self::trade).
    fn trade_slope(&self, x: f64, right: bool) -> [f64; 2] {
        if x > 0.0 || (x == 0.0 && right) {
            [-1.0, self.marginal(0, x)]
        } else {
            [-self.marginal(1, -x), 1.0]
        }
    }
}

/// Root of the decreasing `slope` on `[0, hi]` by bisection; `0` or `hi`
/// when the slope does not change sign.
fn bisect_slope(slope: impl Fn(f64) -> f64, hi: f64) -> f64 {
    if slope(0.0) <= 0.0 {
        return 0.0;
    }
    if slope(hi) >= 0.0 {
        return hi;
    }
    let (mut a, mut b) = (0.0, hi);
    for _ in 0..400 {
        let m = 0.5 * (a + b);
        if !(m > a && m < b) {
            break;
        }
        if slope(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Upper end of a bracket containing the maximizer of the concave
/// `h(delta) = p_out f(delta) - p_in delta`.
fn bracket(piece: &Piece, input: usize, prices: &[f64]) -> f64 {
    let cap = piece.drain_input(input);
    if cap.is_finite() {
        return cap;
    }
    let h = |d: f64| prices[1 - input] * piece.output(input, d) - prices[input] * d;
    let mut hi = 1e-6;
    while hi < 1e30 && h(2.0 * hi) > h(hi) {
        hi *= 2.0;
    }
    2.0 * hi
}

/// Best one-directional trade of `piece`; `search` returns the input size
/// given the direction and the bracket end.
fn best_direction(
    piece: &Piece,
    prices: &[f64],
    search: impl Fn(usize, f64) -> f64,
    limit: Option<f64>,
) -> ([f64; 2], f64) {
    let mut best = ([0.0, 0.0], 0.0);
    for input in 0..2 {
        let mut hi = bracket(piece, input, prices);
        if let Some(l) = limit {
            hi = hi.min(l);
        }
        if !(hi > 0.0) {
            continue;
        }
        let d = search(input, hi);
        let out = piece.output(input, d);
        let v = prices[1 - input] * out - prices[input] * d;
        if v > best.1 {
            let mut t = [0.0, 0.0];
            t[input] = -d;
            t[1 - input] = out;
            best = (t, v);
        }
    }
    best
}

fn combine(parts: Vec<([f64; 2], f64)>) -> ArbResult {
    let mut net = [0.0, 0.0];
    let mut value = 0.0;
    for (t, v) in parts {
        net[0] += t[0];
        net[1] += t[1];
        value += v;
    }
    ArbResult {
        trade: Trade::from_signed(&net),
        objective_value: value,
    }
}

/// Optimal arbitrage by bisection on the derivative of the concave
/// objective in each direction of each pool; aggregate markets are solved
/// segment by segment.
pub fn scalar_arb(market: &Market, prices: &[f64]) -> ArbResult {
    let parts = pieces(market)
        .iter()
        .map(|p| {
            let search = |input: usize, hi: f64| {
                bisect_slope(
                    |d| prices[1 - input] * p.marginal(input, d) - prices[input],
                    hi,
                )
            };
            best_direction(p, prices, search, None)
        })
        .collect();
    combine(parts)
}

/// Optimal arbitrage by exhaustive search over `delta = k * step` in both
/// directions, up to the liquidity bound or `bracket`.
pub fn grid_arb(market: &Market, prices: &[f64], step: f64, bracket: Option<f64>) -> ArbResult {
    let parts = pieces(market)
        .iter()
        .map(|p| {
            let grid = |input: usize, hi: f64| {
                let n = (hi / step).ceil() as usize;
                let mut best = (0.0, 0.0);
                for k in 0..=n {
                    let d = (k as f64 * step).min(hi);
                    let v = prices[1 - input] * p.output(input, d) - prices[input] * d;
                    if v > best.1 {
                        best = (d, v);
                    }
                }
                best.0
            };
            best_direction(p, prices, grid, bracket)
        })
        .collect();
    combine(parts)
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub utility: f64,
    pub psi: Vec<f64>,
    pub trades: Vec<Trade>,
    pub method: &'static str,
    /// Largest constraint violation of `psi`.
    pub violation: f64,
}

struct Problem<'a> {
    n: usize,
    obj: &'a Objective,
    floor: Vec<f64>,
    /// `(market, local token indices, piece)` for every scalar variable.
    vars: Vec<(usize, [usize; 2], Piece)>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Problem<'_> {
    fn psi(&self, x: &[f64]) -> (Vec<f64>, Vec<[f64; 2]>) {
        let mut psi = vec![0.0; self.n];
        let mut local = Vec::with_capacity(x.len());
        for ((_, idx, piece), &xi) in self.vars.iter().zip(x) {
            let t = piece.trade(xi);
            psi[idx[0]] += t[0];
            psi[idx[1]] += t[1];
            local.push(t);
        }
        (psi, local)
    }

    fn weights(&self) -> Vec<f64> {
        match self.obj {
            Objective::TotalArbitrage(o) => o.prices.clone(),
            Objective::BasketLiquidation(o) => {
                let mut w = vec![0.0; self.n];
                w[o.out_token] = 1.0;
                w
            }
        }
    }

    /// Augmented Lagrangian and its gradient with respect to `psi`.
    fn lagrangian(&self, psi: &[f64], lambda: &[f64], rho: f64) -> (f64, Vec<f64>) {
        let w = self.weights();
        let mut value = 0.0;
        let mut grad = w.clone();
        for j in 0..self.n {
            value += w[j] * psi[j];
            let h = psi[j] - self.floor[j];
            let mu = (lambda[j] - rho * h).max(0.0);
            value -= (mu * mu - lambda[j] * lambda[j]) / (2.0 * rho);
            grad[j] += mu;
        }
        (value, grad)
    }

    /// Ascent direction, choosing the one-sided derivative at kinks.
    fn direction(&self, x: &[f64], grad_psi: &[f64]) -> Vec<f64> {
        self.vars
            .iter()
            .zip(x)
            .map(|((_, idx, piece), &xi)| {
                let slope = |right: bool| {
                    let s = piece.trade_slope(xi, right);
                    grad_psi[idx[0]] * s[0] + grad_psi[idx[1]] * s[1]
                };
                if xi != 0.0 {
                    slope(xi > 0.0)
                } else {
                    let r = slope(true);
                    let l = slope(false);
                    if r > 0.0 {
                        r
                    } else if l < 0.0 {
                        l
                    } else {
                        0.0
                    }
                }
            })
            .collect()
    }
}

/// Routes by projected gradient ascent on one signed trade size per pool
/// (per segment for aggregates), handling the objective's constraints with
/// an augmented Lagrangian. `steps` bounds the total number of gradient
/// steps and `rate` is the initial step length.
pub fn primal_projected_gradient(
    snapshot: &MarketSnapshot,
    obj: &Objective,
    steps: usize,
    rate: f64,
) -> OracleResult {
    let n = snapshot.n_assets();
    let mut vars = Vec::new();
    for (i, m) in snapshot.markets.iter().enumerate() {
        let idx = m.tokens().indices();
        for p in pieces(m) {
            vars.push((i, [idx[0], idx[1]], p));
        }
    }
    let lower: Vec<f64> = vars.iter().map(|(_, _, p)| -p.drain_input(1)).collect();
    let upper: Vec<f64> = vars.iter().map(|(_, _, p)| p.drain_input(0)).collect();
    let prob = Problem {
        n,
        obj,
        floor: obj.psi_floor(),
        vars,
        lower,
        upper,
    };
    let clamp = |x: &mut Vec<f64>| {
        for (v, (l, u)) in x.iter_mut().zip(prob.lower.iter().zip(&prob.upper)) {
            *v = v.max(*l).min(*u);
        }
    };
    let scale: f64 = prob
        .floor
        .iter()
        .map(|f| f.abs())
        .chain(snapshot.markets.iter().flat_map(|m| {
            pieces(m).into_iter().map(|p| match p {
                Piece::Log { reserves, .. } | Piece::Curve2 { reserves, .. } => {
                    reserves[0].max(reserves[1])
                }
                Piece::Custom(_) => 1.0,
            })
        }))
        .fold(1.0, f64::max);

    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
    let violation_of = |psi: &[f64]| {
        psi.iter()
            .zip(&prob.floor)
            .map(|(p, f)| (f - p).max(0.0))
            .fold(0.0, f64::max)
    };

    let mut x = vec![0.0; prob.vars.len()];
    let mut lambda = vec![0.0; n];
    let mut rho = 1.0 / scale;
    let mut used = 0;
    let mut last_violation = f64::INFINITY;

    while used < steps {
        // Inner ascent at fixed multipliers, Barzilai-Borwein step lengths.
        let budget = (steps / 10).max(100).min(steps - used);
        let (psi, _) = prob.psi(&x);
        let (mut value, gpsi) = prob.lagrangian(&psi, &lambda, rho);
        let mut step = rate;
        let mut d = prob.direction(&x, &gpsi);
        let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
        let mut stalled = false;
        for _ in 0..budget {
            used += 1;
            let mut t = step;
            if let Some((px, pd)) = &prev {
                let s: Vec<f64> = x.iter().zip(px).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = d.iter().zip(pd).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy < 0.0 {
                    t = dot(&s, &s) / -sy;
                }
            }
            let mut accepted = None;
            for _ in 0..80 {
                // Steps stop at the kink at zero instead of crossing it.
                let mut xn: Vec<f64> = x
                    .iter()
                    .zip(&d)
                    .map(|(a, b)| {
                        let v = a + t * b;
                        if a * v < 0.0 {
                            0.0
                        } else {
                            v
                        }
                    })
                    .collect();
                clamp(&mut xn);
                if xn == x {
                    break;
                }
                let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
                let moved = dot(&s, &d);
                let (psin, _) = prob.psi(&xn);
                let (vn, gn) = prob.lagrangian(&psin, &lambda, rho);
                let dn = prob.direction(&xn, &gn);
                // Armijo, or still ascending at the new point when values
                // no longer resolve the change.
                let armijo = vn >= value + 1e-4 * moved;
                let slope = dot(&dn, &s) >= 0.0 && vn >= value - 1e-14 * value.abs();
                if moved > 0.0 && (armijo || slope) {
                    accepted = Some((xn, vn, dn));
                    break;
                }
                t *= 0.5;
            }
            let Some((xn, vn, dn)) = accepted else {
                stalled = true;
                break;
            };
            step = t;
            prev = Some((std::mem::replace(&mut x, xn), std::mem::replace(&mut d, dn)));
            value = vn;
            let stationary = x
                .iter()
                .zip(&d)
                .zip(prob.lower.iter().zip(&prob.upper))
                .map(|((xi, di), (l, u))| ((xi + di).max(*l).min(*u) - xi).abs())
                .fold(0.0, f64::max);
            if stationary <= 1e-14 * scale {
                break;
            }
        }

        let (psi, _) = prob.psi(&x);
        let violation = violation_of(&psi);
        for j in 0..n {
            lambda[j] = (lambda[j] - rho * (psi[j] - prob.floor[j])).max(0.0);
        }
        if violation <= 1e-14 * scale && stalled {
            break;
        }
        if violation > 0.25 * last_violation {
            rho = (rho * 4.0).min(1e8 / scale);
        }
        last_violation = violation;
    }

    let (psi, local) = prob.psi(&x);
    let mut per_market = vec![[0.0, 0.0]; snapshot.markets.len()];
    for ((i, _, _), t) in prob.vars.iter().zip(&local) {
        per_market[*i][0] += t[0];
        per_market[*i][1] += t[1];
    }
    let violation = violation_of(&psi);
    OracleResult {
        utility: obj.utility(&psi, violation),
        psi,
        trades: per_market.iter().map(|t| Trade::from_signed(t)).collect(),
        method: "primal-pg",
        violation,
    }
}

/// `true` when `trade` satisfies the market's trading-function acceptance
/// condition to relative tolerance `tol`, checked from the trading function
/// rather than the market's own exchange code.
pub fn trade_is_feasible(market: &Market, trade: &Trade, tol: f64) -> bool {
    let s = trade.signed();
    let ps = pieces(market);
    if ps.len() != 1 {
        return true;
    }
    let p = &ps[0];
    let (input, amount, received) = if s[0] < 0.0 {
        (0, -s[0], s[1])
    } else if s[1] < 0.0 {
        (1, -s[1], s[0])
    } else {
        return s[0] == 0.0 && s[1] == 0.0;
    };
    let best = p.output(input, amount);
    received <= best + tol * best.max(1.0)
}
