use std::fmt;
use std::sync::Arc;

use crate::network::{TokenMap, Trade};

use super::{
    check_acceptance, check_fee, check_prices, check_two_asset, swap_leg, updated_reserves,
    ArbResult, MarketError, SwapCurve, SwapSolution,
};

const BISECTION_REL_WIDTH: f64 = 1e-12;
const BISECTION_MAX_ITER: usize = 200;
const BRACKET_CAP: f64 = 1e30;

/// Solves the arbitrage problem of any swap market from its price impact
/// function alone: no-trade test, then bisection on
/// `nu_out * f'(delta) = nu_in` in the first profitable direction.
pub fn solve_swap_generic(curve: &dyn SwapCurve, prices: &[f64]) -> Result<ArbResult, MarketError> {
    check_prices(prices)?;
    let ratio = prices[0] / prices[1];
    let spot0 = curve.price_impact(0, 0.0);
    let spot1 = curve.price_impact(1, 0.0);
    if spot0 > ratio {
        let first = ArbResult::from_swap(prices, solve_direction(curve, 0, prices)?);
        if first.objective_value > 0.0 {
            return Ok(first);
        }
    }
    if ratio * spot1 > 1.0 {
        return Ok(ArbResult::from_swap(
            prices,
            solve_direction(curve, 1, prices)?,
        ));
    }
    Ok(ArbResult::zero(2))
}

fn solve_direction(
    curve: &dyn SwapCurve,
    input: usize,
    prices: &[f64],
) -> Result<SwapSolution, MarketError> {
    let target = prices[input] / prices[1 - input];
    let mut slope_lo = curve.price_impact(input, 0.0);
    if slope_lo <= target {
        return Ok(SwapSolution::none(input));
    }
    let cap = curve.max_input(input);
    let (mut lo, mut hi) = if cap.is_finite() {
        if cap <= 0.0 {
            return Ok(SwapSolution::none(input));
        }
        if curve.min_supported_price(input) >= target {
            return Ok(SwapSolution {
                input,
                amount_in: cap,
                amount_out: curve.forward(input, cap),
            });
        }
        (0.0, cap)
    } else {
        let (mut lo, mut hi) = (0.0, 1.0);
        loop {
            let slope = curve.price_impact(input, hi);
            if slope < target {
                break;
            }
            if slope > slope_lo * (1.0 + 1e-9) {
                return Err(non_monotone(input, hi));
            }
            slope_lo = slope;
            lo = hi;
            hi *= 4.0;
            if hi > BRACKET_CAP {
                return Err(MarketError::Unbounded(format!(
                    "marginal rate stays above {target} beyond {BRACKET_CAP} units of input {input}"
                )));
            }
        }
        (lo, hi)
    };
    for _ in 0..BISECTION_MAX_ITER {
        if hi - lo <= BISECTION_REL_WIDTH * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let slope = curve.price_impact(input, mid);
        if slope > slope_lo * (1.0 + 1e-9) + f64::MIN_POSITIVE {
            return Err(non_monotone(input, mid));
        }
        if slope >= target {
            lo = mid;
            slope_lo = slope;
        } else {
            hi = mid;
        }
    }
    let amount_in = 0.5 * (lo + hi);
    Ok(SwapSolution {
        input,
        amount_in,
        amount_out: curve.forward(input, amount_in),
    })
}

fn non_monotone(input: usize, at: f64) -> MarketError {
    MarketError::InvalidMarket(format!(
        "price impact of input {input} increases near {at}; forward exchange is not concave"
    ))
}

/// Spot-checks concavity and monotonicity of a curve on a probe grid.
pub(crate) fn probe_curve(curve: &dyn SwapCurve) -> Result<(), MarketError> {
    for input in 0..2 {
        let cap = curve.max_input(input);
        let grid: Vec<f64> = if cap.is_finite() {
            (0..=64)
                .map(|i| cap * (1.0 - 1e-9) * i as f64 / 64.0)
                .collect()
        } else {
            std::iter::once(0.0)
                .chain((0..40).map(|k| 1e-6 * 4f64.powi(k)))
                .collect()
        };
        let f0 = curve.forward(input, 0.0);
        if f0.abs() > 1e-12 {
            return Err(MarketError::InvalidMarket(format!(
                "forward exchange of input {input} is {f0} at zero"
            )));
        }
        let mut prev: Option<(f64, f64, f64)> = None;
        for &d in &grid {
            let f = curve.forward(input, d);
            let s = curve.price_impact(input, d);
            if !(f.is_finite() && s.is_finite() && f >= 0.0 && s >= 0.0) {
                return Err(MarketError::InvalidMarket(format!(
                    "forward exchange of input {input} is not finite and nonnegative at {d}"
                )));
            }
            if let Some((_, pf, ps)) = prev {
                if f < pf * (1.0 - 1e-12) {
                    return Err(MarketError::InvalidMarket(format!(
                        "forward exchange of input {input} decreases near {d}"
                    )));
                }
                if s > ps * (1.0 + 1e-9) + f64::MIN_POSITIVE {
                    return Err(non_monotone(input, d));
                }
            }
            prev = Some((d, f, s));
        }
    }
    Ok(())
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Swap market given directly by its forward exchange functions and their
/// derivatives.
#[derive(Clone)]
pub struct FnCurve {
    forward: [ScalarFn; 2],
    price_impact: [ScalarFn; 2],
    max_input: [f64; 2],
}

impl FnCurve {
    pub fn new(forward: [ScalarFn; 2], price_impact: [ScalarFn; 2], max_input: [f64; 2]) -> Self {
        Self {
            forward,
            price_impact,
            max_input,
        }
    }
}

impl fmt::Debug for FnCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnCurve")
            .field("max_input", &self.max_input)
            .finish_non_exhaustive()
    }
}

impl SwapCurve for FnCurve {
    fn forward(&self, input: usize, amount: f64) -> f64 {
        if amount >= self.max_input[input] {
            return (self.forward[input])(self.max_input[input]);
        }
        (self.forward[input])(amount)
    }

    fn price_impact(&self, input: usize, amount: f64) -> f64 {
        if amount >= self.max_input[input] {
            return 0.0;
        }
        (self.price_impact[input])(amount)
    }

    fn max_input(&self, input: usize) -> f64 {
        self.max_input[input]
    }
}

/// Two-asset Curve pool, `phi(R) = A (R0 + R1) - 1 / (R0 R1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Curve2Pool {
    pub reserves: [f64; 2],
    pub amp: f64,
    pub fee: f64,
}

impl Curve2Pool {
    pub fn new(reserves: [f64; 2], amp: f64, fee: f64) -> Result<Self, MarketError> {
        if !reserves.iter().all(|r| r.is_finite() && *r > 0.0) {
            return Err(MarketError::InvalidMarket(format!(
                "curve reserves must be positive, got {reserves:?}"
            )));
        }
        if !(amp.is_finite() && amp > 0.0) {
            return Err(MarketError::InvalidMarket(format!(
                "amplification {amp} must be positive"
            )));
        }
        check_fee(fee)?;
        Ok(Self { reserves, amp, fee })
    }

    pub fn phi(&self, r: [f64; 2]) -> f64 {
        self.amp * (r[0] + r[1]) - 1.0 / (r[0] * r[1])
    }

    /// Gradient of the trading function.
    fn grad_phi(&self, r: [f64; 2]) -> [f64; 2] {
        let inv = 1.0 / (r[0] * r[1]);
        [self.amp + inv / r[0], self.amp + inv / r[1]]
    }
}

impl Curve2Pool {
    /// Output reserve left after tendering `amount` of `input`: the root
    /// `y` of `phi(R_in + fee * delta, y) = phi(R)`, found by bisection on
    /// `y` so that it keeps full relative precision as the pool drains.
    /// Returns the feasible (`phi >= phi(R)`) end of the final bracket.
    fn remaining(&self, input: usize, amount: f64) -> f64 {
        let r_in = self.reserves[input];
        let r_out = self.reserves[1 - input];
        let x = r_in + self.fee * amount;
        // phi(x, y) - phi(R), grouped to avoid cancelling large terms.
        let residual = |y: f64| {
            self.amp * (self.fee * amount - (r_out - y)) - 1.0 / (x * y) + 1.0 / (r_in * r_out)
        };
        let mut hi = r_out;
        let mut lo = 0.5 * r_out;
        while residual(lo) >= 0.0 {
            hi = lo;
            lo *= 0.5;
            if lo < f64::MIN_POSITIVE {
                return hi;
            }
        }
        for _ in 0..BISECTION_MAX_ITER {
            let mid = 0.5 * (lo + hi);
            if !(mid > lo && mid < hi) || hi - lo <= 1e-15 * hi {
                break;
            }
            if residual(mid) >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

impl SwapCurve for Curve2Pool {
    fn forward(&self, input: usize, amount: f64) -> f64 {
        if amount <= 0.0 {
            return 0.0;
        }
        self.reserves[1 - input] - self.remaining(input, amount)
    }

    /// Implicit derivative `fee * phi_in / phi_out` at the post-trade state.
    fn price_impact(&self, input: usize, amount: f64) -> f64 {
        let amount = amount.max(0.0);
        let mut post = self.reserves;
        if amount > 0.0 {
            post[1 - input] = self.remaining(input, amount);
        }
        post[input] += self.fee * amount;
        let g = self.grad_phi(post);
        self.fee * g[input] / g[1 - input]
    }
}

/// Forward exchange source of a [`GenericSwapMarket`].
#[derive(Debug, Clone)]
pub enum GenericCurve {
    Curve2(Curve2Pool),
    Custom(Arc<FnCurve>),
}

impl SwapCurve for GenericCurve {
    fn forward(&self, input: usize, amount: f64) -> f64 {
        match self {
            GenericCurve::Curve2(c) => c.forward(input, amount),
            GenericCurve::Custom(c) => c.forward(input, amount),
        }
    }

    fn price_impact(&self, input: usize, amount: f64) -> f64 {
        match self {
            GenericCurve::Curve2(c) => c.price_impact(input, amount),
            GenericCurve::Custom(c) => c.price_impact(input, amount),
        }
    }

    fn max_input(&self, input: usize) -> f64 {
        match self {
            GenericCurve::Curve2(c) => c.max_input(input),
            GenericCurve::Custom(c) => c.max_input(input),
        }
    }
}

/// Swap market solved by bisection on its price impact function.
#[derive(Debug, Clone)]
pub struct GenericSwapMarket {
    pub curve: GenericCurve,
    pub tokens: TokenMap,
}

impl GenericSwapMarket {
    /// Validates the curve on a probe grid before accepting it.
    pub fn new(curve: GenericCurve, tokens: TokenMap) -> Result<Self, MarketError> {
        check_two_asset(&tokens)?;
        probe_curve(&curve)?;
        Ok(Self { curve, tokens })
    }

    pub fn find_arb(&self, prices: &[f64]) -> Result<ArbResult, MarketError> {
        solve_swap_generic(&self.curve, prices)
    }

    pub fn swap(&self, trade: &Trade) -> Result<Self, MarketError> {
        let GenericCurve::Curve2(pool) = &self.curve else {
            return Err(MarketError::Unsupported(
                "custom swap curves carry no reserve state".into(),
            ));
        };
        let Some((input, amount_in, amount_out)) = swap_leg(trade)? else {
            return Ok(self.clone());
        };
        check_acceptance(pool, input, amount_in, amount_out)?;
        let reserves = updated_reserves(pool.reserves, input, amount_in, amount_out)?;
        Ok(Self {
            curve: GenericCurve::Curve2(Curve2Pool::new(reserves, pool.amp, pool.fee)?),
            tokens: self.tokens.clone(),
        })
    }

    pub fn add_liquidity(&self, amounts: [f64; 2]) -> Result<Self, MarketError> {
        let GenericCurve::Curve2(pool) = &self.curve else {
            return Err(MarketError::Unsupported(
                "custom swap curves carry no reserve state".into(),
            ));
        };
        let r = [pool.reserves[0] + amounts[0], pool.reserves[1] + amounts[1]];
        Ok(Self {
            curve: GenericCurve::Curve2(Curve2Pool::new(r, pool.amp, pool.fee)?),
            tokens: self.tokens.clone(),
        })
    }
}
