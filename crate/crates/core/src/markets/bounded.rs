use crate::network::{TokenMap, Trade};

use super::{
    check_acceptance, check_fee, check_prices, check_two_asset, swap_leg, updated_reserves,
    ArbResult, MarketError, SwapCurve, SwapSolution,
};

/// Bounded-liquidity product pool, `phi(R) = sqrt((R0 + alpha) (R1 + beta))`.
///
/// `alpha` and `beta` are virtual reserve offsets. With both positive the
/// pool can be drained in either direction by a finite input, and its
/// optimal arbitrage is a boundary trade outside the active interval
/// `(fee * beta^2 / k, k / (fee * alpha^2))`, `k = (R0 + alpha)(R1 + beta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundedSegment {
    pub reserves: [f64; 2],
    pub alpha: f64,
    pub beta: f64,
    pub fee: f64,
}

impl BoundedSegment {
    pub fn new(reserves: [f64; 2], alpha: f64, beta: f64, fee: f64) -> Result<Self, MarketError> {
        if !reserves.iter().all(|r| r.is_finite() && *r >= 0.0) {
            return Err(MarketError::InvalidMarket(format!(
                "reserves must be nonnegative, got {reserves:?}"
            )));
        }
        if !(alpha.is_finite() && alpha >= 0.0 && beta.is_finite() && beta >= 0.0) {
            return Err(MarketError::InvalidMarket(format!(
                "offsets must be nonnegative, got alpha={alpha}, beta={beta}"
            )));
        }
        if reserves[0] + alpha <= 0.0 || reserves[1] + beta <= 0.0 {
            return Err(MarketError::InvalidMarket(
                "virtual reserves must be strictly positive".into(),
            ));
        }
        check_fee(fee)?;
        Ok(Self {
            reserves,
            alpha,
            beta,
            fee,
        })
    }

    pub fn phi(&self, r: [f64; 2]) -> f64 {
        ((r[0] + self.alpha) * (r[1] + self.beta)).sqrt()
    }

    pub fn virtual_reserves(&self) -> [f64; 2] {
        [self.reserves[0] + self.alpha, self.reserves[1] + self.beta]
    }

    pub fn invariant(&self) -> f64 {
        let [a, b] = self.virtual_reserves();
        a * b
    }

    fn offset(&self, asset: usize) -> f64 {
        if asset == 0 {
            self.alpha
        } else {
            self.beta
        }
    }

    /// Price range of `nu0 / nu1` in which the optimal trade is interior.
    /// The upper end is `+inf` when `alpha = 0`; the lower end is `0` when
    /// `beta = 0`.
    pub fn active_interval(&self) -> (f64, f64) {
        let k = self.invariant();
        let lo = self.fee * self.beta * self.beta / k;
        let hi = if self.alpha == 0.0 {
            f64::INFINITY
        } else {
            k / (self.fee * self.alpha * self.alpha)
        };
        (lo, hi)
    }

    /// Trade that takes all of the output reserve in direction `input`.
    pub(crate) fn full_liquidity(&self, input: usize) -> SwapSolution {
        let d = self.max_input(input);
        if d == 0.0 || !d.is_finite() {
            return SwapSolution::none(input);
        }
        SwapSolution {
            input,
            amount_in: d,
            amount_out: self.reserves[1 - input],
        }
    }

    /// Interior solve of `nu_out * f'(delta) = nu_in`, clamped to the
    /// liquidity bound.
    fn solve_direction(&self, input: usize, prices: &[f64]) -> SwapSolution {
        let out = 1 - input;
        if self.reserves[out] == 0.0 {
            return SwapSolution::none(input);
        }
        let v = self.virtual_reserves();
        let g = self.fee;
        let q = prices[input] / prices[out];
        if g * v[out] <= q * v[input] {
            return SwapSolution::none(input);
        }
        let amount_in = ((g * v[0] * v[1] / q).sqrt() - v[input]) / g;
        let cap = self.max_input(input);
        if amount_in >= cap {
            return self.full_liquidity(input);
        }
        if !(amount_in > 0.0) {
            return SwapSolution::none(input);
        }
        SwapSolution {
            input,
            amount_in,
            amount_out: self.forward(input, amount_in),
        }
    }

    pub fn find_arb(&self, prices: &[f64]) -> Result<ArbResult, MarketError> {
        check_prices(prices)?;
        let ratio = prices[0] / prices[1];
        let (lo, hi) = self.active_interval();
        if ratio <= lo {
            return Ok(ArbResult::from_swap(prices, self.full_liquidity(0)));
        }
        if ratio >= hi {
            return Ok(ArbResult::from_swap(prices, self.full_liquidity(1)));
        }
        let first = ArbResult::from_swap(prices, self.solve_direction(0, prices));
        if first.objective_value > 0.0 {
            return Ok(first);
        }
        Ok(ArbResult::from_swap(
            prices,
            self.solve_direction(1, prices),
        ))
    }

    pub fn swap(&self, trade: &Trade) -> Result<Self, MarketError> {
        let Some((input, amount_in, amount_out)) = swap_leg(trade)? else {
            return Ok(*self);
        };
        check_acceptance(self, input, amount_in, amount_out)?;
        let reserves = updated_reserves(self.reserves, input, amount_in, amount_out)?;
        Ok(Self { reserves, ..*self })
    }

    /// Adds `amounts` to the reserves and re-solves the offsets so that the
    /// active interval is unchanged.
    pub fn add_liquidity(&self, amounts: [f64; 2]) -> Result<Self, MarketError> {
        let (lo, hi) = self.active_interval();
        self.with_reserves_in_interval(
            [self.reserves[0] + amounts[0], self.reserves[1] + amounts[1]],
            lo,
            hi,
        )
    }

    /// Segment with the given reserves whose offsets place its active
    /// interval at `(lo, hi)`.
    pub(crate) fn with_reserves_in_interval(
        &self,
        reserves: [f64; 2],
        lo: f64,
        hi: f64,
    ) -> Result<Self, MarketError> {
        Self::in_interval(reserves, lo, hi, self.fee)
    }

    /// Segment holding `reserves` whose active interval is `(lo, hi)`.
    /// Needs `hi / lo > 1 / fee^2`; `hi` may be infinite.
    pub fn in_interval(
        reserves: [f64; 2],
        lo: f64,
        hi: f64,
        fee: f64,
    ) -> Result<Self, MarketError> {
        check_fee(fee)?;
        if !(lo >= 0.0 && lo.is_finite() && hi > lo) {
            return Err(MarketError::Config(format!("bad interval ({lo}, {hi})")));
        }
        let g = fee;
        let cb = (lo / g).sqrt();
        let ca = if hi.is_infinite() {
            0.0
        } else {
            1.0 / (g * hi).sqrt()
        };
        let a = 1.0 - ca * cb;
        let b = reserves[0] * cb + reserves[1] * ca;
        let c = reserves[0] * reserves[1];
        if !(a > 0.0) {
            return Err(MarketError::Config(format!(
                "interval ({lo}, {hi}) is too narrow for fee {g}"
            )));
        }
        let s = (b + (b * b + 4.0 * a * c).sqrt()) / (2.0 * a);
        if !(s > 0.0) {
            return Err(MarketError::Config(
                "cannot place liquidity in an empty segment".into(),
            ));
        }
        Self::new(reserves, ca * s, cb * s, g)
    }
}

impl SwapCurve for BoundedSegment {
    /// `min(R_out, fee * delta * v_out / (v_in + fee * delta))`.
    fn forward(&self, input: usize, amount: f64) -> f64 {
        let out = 1 - input;
        if amount <= 0.0 {
            return 0.0;
        }
        if amount >= self.max_input(input) {
            return self.reserves[out];
        }
        let v = self.virtual_reserves();
        let gd = self.fee * amount;
        (gd * v[out] / (v[input] + gd)).min(self.reserves[out])
    }

    fn price_impact(&self, input: usize, amount: f64) -> f64 {
        if self.reserves[1 - input] == 0.0 || amount >= self.max_input(input) {
            return 0.0;
        }
        let v = self.virtual_reserves();
        let denom = v[input] + self.fee * amount.max(0.0);
        self.fee * v[0] * v[1] / (denom * denom)
    }

    /// `R_out * (R_in + offset_in) / (fee * offset_out)`.
    fn max_input(&self, input: usize) -> f64 {
        let out = 1 - input;
        if self.reserves[out] == 0.0 {
            return 0.0;
        }
        let off_out = self.offset(out);
        if off_out == 0.0 {
            return f64::INFINITY;
        }
        let v = self.virtual_reserves();
        self.reserves[out] * v[input] / (self.fee * off_out)
    }

    /// `fee * offset_out^2 / k`.
    fn min_supported_price(&self, input: usize) -> f64 {
        let off = self.offset(1 - input);
        self.fee * off * off / self.invariant()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundedProductMarket {
    pub segment: BoundedSegment,
    pub tokens: TokenMap,
}

impl BoundedProductMarket {
    pub fn new(segment: BoundedSegment, tokens: TokenMap) -> Result<Self, MarketError> {
        check_two_asset(&tokens)?;
        Ok(Self { segment, tokens })
    }
}
