use crate::network::{TokenMap, Trade};

use super::{
    check_acceptance, check_fee, check_prices, check_two_asset, swap_leg, updated_reserves,
    ArbResult, MarketError, SwapCurve, SwapSolution,
};

/// Two-asset weighted geometric mean pool, `phi(R) = R0^w * R1^(1-w)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeomMeanPool {
    pub reserves: [f64; 2],
    /// Weight of local asset 0.
    pub weight: f64,
    pub fee: f64,
}

impl GeomMeanPool {
    pub fn new(reserves: [f64; 2], weight: f64, fee: f64) -> Result<Self, MarketError> {
        if !reserves.iter().all(|r| r.is_finite() && *r > 0.0) {
            return Err(MarketError::InvalidMarket(format!(
                "geometric mean reserves must be positive, got {reserves:?}"
            )));
        }
        if !(weight > 0.0 && weight < 1.0) {
            return Err(MarketError::InvalidMarket(format!(
                "weight {weight} outside (0, 1)"
            )));
        }
        check_fee(fee)?;
        Ok(Self {
            reserves,
            weight,
            fee,
        })
    }

    /// Constant product pool (`w = 1/2`).
    pub fn product(reserves: [f64; 2], fee: f64) -> Result<Self, MarketError> {
        Self::new(reserves, 0.5, fee)
    }

    pub fn phi(&self, r: [f64; 2]) -> f64 {
        r[0].powf(self.weight) * r[1].powf(1.0 - self.weight)
    }

    /// Exponent `w_in / w_out` of the forward exchange function.
    fn eta(&self, input: usize) -> f64 {
        let w = [self.weight, 1.0 - self.weight];
        w[input] / w[1 - input]
    }

    /// Closed-form optimal trade in one direction.
    fn solve_direction(&self, input: usize, prices: &[f64]) -> SwapSolution {
        let eta = self.eta(input);
        let (r_in, r_out) = (self.reserves[input], self.reserves[1 - input]);
        let g = self.fee;
        // nu_out * f'(0) <= nu_in: zero trade is optimal.
        let ratio = eta * g * prices[1 - input] * r_out / (prices[input] * r_in);
        if ratio <= 1.0 {
            return SwapSolution::none(input);
        }
        let amount_in = r_in / g * (ratio.powf(1.0 / (eta + 1.0)) - 1.0);
        SwapSolution {
            input,
            amount_in,
            amount_out: self.forward(input, amount_in),
        }
    }

    pub fn find_arb(&self, prices: &[f64]) -> Result<ArbResult, MarketError> {
        check_prices(prices)?;
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
        if reserves.iter().any(|&r| r <= 0.0) {
            return Err(MarketError::RejectedTrade(
                "trade would exhaust a geometric mean reserve".into(),
            ));
        }
        Ok(Self { reserves, ..*self })
    }

    pub fn add_liquidity(&self, amounts: [f64; 2]) -> Result<Self, MarketError> {
        Self::new(
            [self.reserves[0] + amounts[0], self.reserves[1] + amounts[1]],
            self.weight,
            self.fee,
        )
    }
}

impl SwapCurve for GeomMeanPool {
    /// `R_out * (1 - (R_in / (R_in + fee * delta))^eta)`.
    fn forward(&self, input: usize, amount: f64) -> f64 {
        if amount <= 0.0 {
            return 0.0;
        }
        let r_in = self.reserves[input];
        let r_out = self.reserves[1 - input];
        let x = self.fee * amount / r_in;
        -r_out * (-self.eta(input) * x.ln_1p()).exp_m1()
    }

    fn price_impact(&self, input: usize, amount: f64) -> f64 {
        let eta = self.eta(input);
        let r_in = self.reserves[input];
        let r_out = self.reserves[1 - input];
        let g = self.fee;
        let base = r_in / (r_in + g * amount.max(0.0));
        g * eta * r_out / r_in * base.powf(eta + 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeomMeanMarket {
    pub pool: GeomMeanPool,
    pub tokens: TokenMap,
}

impl GeomMeanMarket {
    pub fn new(pool: GeomMeanPool, tokens: TokenMap) -> Result<Self, MarketError> {
        check_two_asset(&tokens)?;
        Ok(Self { pool, tokens })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markets::Market;

    fn product(r: [f64; 2], fee: f64) -> GeomMeanPool {
        GeomMeanPool::product(r, fee).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    /// Brute force over a uniform grid, output from the product invariant.
    fn grid_product_arb(r: [f64; 2], prices: [f64; 2], hi: f64, step: f64) -> (f64, f64) {
        let k = r[0] * r[1];
        let mut best = (0.0, 0.0);
        let steps = (hi / step) as usize;
        for i in 0..=steps {
            let d = i as f64 * step;
            let out = r[1] - k / (r[0] + d);
            let v = prices[1] * out - prices[0] * d;
            if v > best.1 {
                best = (d, v);
            }
        }
        best
    }

    #[test]
    fn closed_form_example_matches_grid() {
        let pool = product([100.0, 100.0], 1.0);
        let res = pool.find_arb(&[1.0, 2.0]).unwrap();
        let d = 100.0 * (2f64.sqrt() - 1.0);
        let out = 100.0 * (1.0 - 1.0 / 2f64.sqrt());
        assert!(rel(res.trade.tendered[0], d) < 1e-12);
        assert!(rel(res.trade.received[1], out) < 1e-12);
        assert_eq!(res.trade.tendered[1], 0.0);
        assert_eq!(res.trade.received[0], 0.0);
        assert!((res.trade.tendered[0] - 41.4214).abs() < 1e-4);
        assert!((res.trade.received[1] - 29.2893).abs() < 1e-4);

        let (gd, gv) = grid_product_arb([100.0, 100.0], [1.0, 2.0], 200.0, 1e-4);
        assert!((gd - res.trade.tendered[0]).abs() <= 1e-4);
        assert!(res.objective_value >= gv - 1e-9);
        assert!(res.objective_value - gv < 1e-6);
    }

    #[test]
    fn zero_trade_inside_spread() {
        let pool = product([100.0, 100.0], 0.997);
        let res = pool.find_arb(&[1.0, 1.0]).unwrap();
        assert!(res.trade.is_zero());
        assert_eq!(res.objective_value, 0.0);
        let m = Market::GeomMean(GeomMeanMarket::new(pool, TokenMap::pair(0, 1).unwrap()).unwrap());
        assert!(m.no_trade(&[1.0, 1.0]).unwrap());
        // Spread is [0.997, 1/0.997].
        assert!((m.spot_price(0) - 0.997).abs() < 1e-15);
        assert!((1.0 / m.spot_price(1) - 1.00301).abs() < 1e-5);
    }

    #[test]
    fn no_trade_fails_outside_spread() {
        let pool = product([100.0, 100.0], 1.0);
        let m = Market::GeomMean(GeomMeanMarket::new(pool, TokenMap::pair(0, 1).unwrap()).unwrap());
        assert!(!m.no_trade(&[1.0, 2.0]).unwrap());
        assert!(m.find_arb(&[1.0, 2.0]).unwrap().objective_value > 0.0);
        // Exactly at the boundary of the spread.
        let p1 = 3.0;
        let boundary = [m.spot_price(0) * p1, p1];
        assert!(m.no_trade(&boundary).unwrap());
        assert!(m.find_arb(&boundary).unwrap().trade.is_zero());
    }

    #[test]
    fn reverse_direction_uses_second_asset() {
        let pool = product([100.0, 100.0], 1.0);
        let res = pool.find_arb(&[2.0, 1.0]).unwrap();
        assert!(rel(res.trade.tendered[1], 100.0 * (2f64.sqrt() - 1.0)) < 1e-12);
        assert!(rel(res.trade.received[0], 100.0 * (1.0 - 1.0 / 2f64.sqrt())) < 1e-12);
    }

    #[test]
    fn forward_exchange_values() {
        let pool = product([100.0, 100.0], 1.0);
        assert_eq!(pool.forward(0, 0.0), 0.0);
        assert!((pool.forward(0, 100.0) - 50.0).abs() < 1e-12);
        let w = GeomMeanPool::new([1234.0, 567.0], 0.8, 0.997).unwrap();
        for &d in &[1e-6, 0.5, 17.0, 1e3, 1e5] {
            for input in 0..2 {
                let out = w.forward(input, d);
                let mut post = w.reserves;
                post[input] += w.fee * d;
                post[1 - input] -= out;
                // Rounding in R_out - out is amplified by R_out / post_out.
                let tol = 1e-12 * (1.0 + w.reserves[1 - input] / post[1 - input]);
                let drift = (w.phi(post) / w.phi(w.reserves)).ln().abs();
                assert!(drift <= tol, "{drift} > {tol}");
            }
        }
    }

    #[test]
    fn price_impact_is_derivative_of_forward() {
        let w = GeomMeanPool::new([1500.0, 1100.0], 0.8, 0.997).unwrap();
        for input in 0..2 {
            for &d in &[0.0, 3.0, 250.0] {
                let h = 1e-4 * (1.0 + d);
                let fd = if d == 0.0 {
                    (w.forward(input, h) - w.forward(input, 0.0)) / h
                } else {
                    (w.forward(input, d + h) - w.forward(input, d - h)) / (2.0 * h)
                };
                assert!(rel(fd, w.price_impact(input, d)) < 1e-4);
            }
        }
    }

    #[test]
    fn swap_and_liquidity() {
        let pool = product([100.0, 100.0], 1.0);
        assert_eq!(pool.swap(&Trade::zero(2)).unwrap(), pool);
        let after = pool.swap(&Trade::swap(0, 100.0, 50.0)).unwrap();
        assert!((after.reserves[0] - 200.0).abs() < 1e-12);
        assert!((after.reserves[1] - 50.0).abs() < 1e-12);
        assert!(matches!(
            pool.swap(&Trade::swap(0, 100.0, 60.0)),
            Err(MarketError::RejectedTrade(_))
        ));
        assert!(matches!(
            pool.swap(&Trade::swap(0, 1e9, 150.0)),
            Err(MarketError::RejectedTrade(_))
        ));
        assert_eq!(pool.add_liquidity([0.0, 0.0]).unwrap(), pool);
        assert_eq!(
            pool.add_liquidity([10.0, 10.0]).unwrap().reserves,
            [110.0, 110.0]
        );
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(GeomMeanPool::new([0.0, 1.0], 0.5, 1.0).is_err());
        assert!(GeomMeanPool::new([1.0, 1.0], 1.0, 1.0).is_err());
        assert!(GeomMeanPool::new([1.0, 1.0], 0.5, 0.0).is_err());
        assert!(GeomMeanPool::new([1.0, 1.0], 0.5, 1.5).is_err());
        assert!(matches!(
            product([1.0, 1.0], 1.0).find_arb(&[0.0, 1.0]),
            Err(MarketError::NonPositivePrice(_))
        ));
    }
}
