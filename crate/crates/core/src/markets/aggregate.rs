use crate::network::{TokenMap, Trade};

use super::{
    check_fee, check_prices, check_two_asset, swap_leg, ArbResult, BoundedSegment, MarketError,
    SwapCurve, ACCEPTANCE_TOL,
};

/// A collection of bounded-liquidity segments on the same token pair whose
/// active intervals are pairwise disjoint.
///
/// For a price ratio `p = nu0 / nu1` at most one segment has `p` strictly
/// inside its active interval. Every segment below `p` sells all of its
/// asset 0 and every segment above `p` sells all of its asset 1, so their
/// contribution is read off prefix and suffix sums after a binary search.
#[derive(Debug, Clone)]
pub struct AggregateMarket {
    segments: Vec<BoundedSegment>,
    fee: f64,
    tokens: TokenMap,
    lows: Vec<f64>,
    highs: Vec<f64>,
    // below[k] sums the full-liquidity trades (asset 1 in, asset 0 out) of
    // segments 0..k; above[k] sums (asset 0 in, asset 1 out) over k..s.
    below: Vec<[f64; 2]>,
    above: Vec<[f64; 2]>,
}

impl AggregateMarket {
    /// Sorts the segments by the lower end of their active interval and
    /// checks that intervals do not overlap. Touching endpoints are allowed.
    pub fn new(
        mut segments: Vec<BoundedSegment>,
        fee: f64,
        tokens: TokenMap,
    ) -> Result<Self, MarketError> {
        check_two_asset(&tokens)?;
        check_fee(fee)?;
        if segments.is_empty() {
            return Err(MarketError::Config(
                "aggregate market has no segments".into(),
            ));
        }
        if let Some(s) = segments.iter().find(|s| s.fee != fee) {
            return Err(MarketError::Config(format!(
                "segment fee {} differs from the aggregate fee {fee}",
                s.fee
            )));
        }
        segments.sort_by(|a, b| a.active_interval().0.total_cmp(&b.active_interval().0));
        let mut market = Self {
            segments,
            fee,
            tokens,
            lows: Vec::new(),
            highs: Vec::new(),
            below: Vec::new(),
            above: Vec::new(),
        };
        market.rebuild()?;
        Ok(market)
    }

    fn rebuild(&mut self) -> Result<(), MarketError> {
        let s = self.segments.len();
        let (lows, highs): (Vec<f64>, Vec<f64>) =
            self.segments.iter().map(|g| g.active_interval()).unzip();
        for (i, (lo, hi)) in lows.iter().zip(&highs).enumerate() {
            if !(lo < hi) {
                return Err(MarketError::Config(format!(
                    "segment {i} has an empty active interval ({lo}, {hi})"
                )));
            }
        }
        for i in 1..s {
            // Touching intervals may overlap by rounding in the offsets.
            if highs[i - 1] > lows[i] * (1.0 + 1e-12) {
                return Err(MarketError::Config(format!(
                    "active intervals of segments {} and {i} overlap: ({}, {}) and ({}, {})",
                    i - 1,
                    lows[i - 1],
                    highs[i - 1],
                    lows[i],
                    highs[i]
                )));
            }
        }
        let mut below = Vec::with_capacity(s + 1);
        let mut acc = [0.0, 0.0];
        below.push(acc);
        for g in &self.segments {
            let full = g.full_liquidity(1);
            acc[0] += full.amount_in;
            acc[1] += full.amount_out;
            below.push(acc);
        }
        let mut above = vec![[0.0, 0.0]; s + 1];
        let mut acc = [0.0, 0.0];
        for (k, g) in self.segments.iter().enumerate().rev() {
            let full = g.full_liquidity(0);
            acc[0] += full.amount_in;
            acc[1] += full.amount_out;
            above[k] = acc;
        }
        self.lows = lows;
        self.highs = highs;
        self.below = below;
        self.above = above;
        Ok(())
    }

    pub fn tokens(&self) -> &TokenMap {
        &self.tokens
    }

    pub fn fee(&self) -> f64 {
        self.fee
    }

    pub fn segments(&self) -> &[BoundedSegment] {
        &self.segments
    }

    /// Active intervals in sorted order.
    pub fn intervals(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.lows.iter().copied().zip(self.highs.iter().copied())
    }

    pub fn spot_price(&self, input: usize) -> f64 {
        self.segments
            .iter()
            .map(|g| g.price_impact(input, 0.0))
            .fold(0.0, f64::max)
    }

    /// Optimal arbitrage using one binary search and one closed-form solve.
    pub fn find_arb(&self, prices: &[f64]) -> Result<ArbResult, MarketError> {
        check_prices(prices)?;
        let ratio = prices[0] / prices[1];
        let k = self.highs.partition_point(|&h| h <= ratio);
        let low = self.below[k];
        // Segments below the price: asset 1 in, asset 0 out.
        let mut net = [low[1], -low[0]];
        let mut value = prices[0] * low[1] - prices[1] * low[0];
        if k < self.segments.len() {
            let mid = self.segments[k].find_arb(prices)?;
            let signed = mid.trade.signed();
            net[0] += signed[0];
            net[1] += signed[1];
            value += mid.objective_value;
            let high = self.above[k + 1];
            net[0] -= high[0];
            net[1] += high[1];
            value += prices[1] * high[1] - prices[0] * high[0];
        }
        Ok(Self::result(net, value))
    }

    /// Reference implementation that solves every segment separately.
    pub fn find_arb_naive(&self, prices: &[f64]) -> Result<ArbResult, MarketError> {
        check_prices(prices)?;
        let mut net = [0.0, 0.0];
        let mut value = 0.0;
        for g in &self.segments {
            let r = g.find_arb(prices)?;
            let signed = r.trade.signed();
            net[0] += signed[0];
            net[1] += signed[1];
            value += r.objective_value;
        }
        Ok(Self::result(net, value))
    }

    fn result(net: [f64; 2], value: f64) -> ArbResult {
        if !(value > 0.0) {
            return ArbResult::zero(2);
        }
        ArbResult {
            trade: Trade::from_signed(&net),
            objective_value: value,
        }
    }

    /// Splits `amount` of input across segments so that their marginal
    /// rates are equal, which maximizes the total output.
    fn split_input(&self, input: usize, amount: f64) -> Result<Vec<f64>, MarketError> {
        let caps: Vec<f64> = self.segments.iter().map(|g| g.max_input(input)).collect();
        let at = |q: f64| -> Vec<f64> {
            self.segments
                .iter()
                .zip(&caps)
                .map(|(g, &cap)| {
                    let v = g.virtual_reserves();
                    if cap == 0.0 || g.price_impact(input, 0.0) <= q {
                        return 0.0;
                    }
                    (((g.fee * v[0] * v[1] / q).sqrt() - v[input]) / g.fee).clamp(0.0, cap)
                })
                .collect()
        };
        let total_cap: f64 = caps.iter().sum();
        if amount >= total_cap {
            let mut split: Vec<f64> = caps.clone();
            let extra = amount - total_cap;
            if let Some(last) = split.iter_mut().rev().find(|c| **c > 0.0) {
                *last += extra;
            } else {
                return Err(MarketError::RejectedTrade(
                    "aggregate market is empty".into(),
                ));
            }
            return Ok(split);
        }
        let mut hi = self.spot_price(input);
        let mut lo = hi;
        let mut sum_lo = 0.0;
        for _ in 0..4096 {
            lo *= 0.5;
            sum_lo = at(lo).iter().sum();
            if sum_lo >= amount {
                break;
            }
        }
        if sum_lo < amount {
            return Err(MarketError::RejectedTrade(
                "could not split the tendered amount across segments".into(),
            ));
        }
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if !(mid > lo && mid < hi) {
                break;
            }
            if at(mid).iter().sum::<f64>() >= amount {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut split = at(lo);
        let total: f64 = split.iter().sum();
        if total > 0.0 {
            let scale = amount / total;
            for d in &mut split {
                *d *= scale;
            }
        }
        Ok(split)
    }

    /// Executes a one-directional trade against the aggregate, splitting the
    /// input across segments at a common marginal rate. Each touched segment
    /// keeps its active interval, so collected fees become liquidity in that
    /// range.
    pub fn swap(&self, trade: &Trade) -> Result<Self, MarketError> {
        let Some((input, amount_in, amount_out)) = swap_leg(trade)? else {
            return Ok(self.clone());
        };
        let out = 1 - input;
        let split = self.split_input(input, amount_in)?;
        let outputs: Vec<f64> = self
            .segments
            .iter()
            .zip(&split)
            .map(|(g, &d)| g.forward(input, d))
            .collect();
        let supplied: f64 = outputs.iter().sum();
        if amount_out > supplied * (1.0 + ACCEPTANCE_TOL) + f64::MIN_POSITIVE {
            return Err(MarketError::RejectedTrade(format!(
                "requested {amount_out} out for {amount_in} in, aggregate supplies at most {supplied}"
            )));
        }
        let share = if supplied > 0.0 {
            (amount_out / supplied).min(1.0)
        } else {
            0.0
        };
        let mut segments = self.segments.clone();
        for (i, g) in segments.iter_mut().enumerate() {
            if split[i] == 0.0 {
                continue;
            }
            let (lo, hi) = (self.lows[i], self.highs[i]);
            let mut r = g.reserves;
            r[input] += split[i];
            r[out] = (r[out] - outputs[i] * share).max(0.0);
            *g = g.with_reserves_in_interval(r, lo, hi)?;
        }
        let mut next = Self {
            segments,
            ..self.clone()
        };
        next.rebuild()?;
        Ok(next)
    }

    /// Adds liquidity to the segment whose active interval equals `range`.
    pub fn add_liquidity(&self, range: (f64, f64), amounts: [f64; 2]) -> Result<Self, MarketError> {
        let close = |a: f64, b: f64| a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
        let idx = self
            .intervals()
            .position(|(lo, hi)| close(lo, range.0) && close(hi, range.1))
            .ok_or_else(|| {
                MarketError::Config(format!("no segment with active interval {range:?}"))
            })?;
        let mut next = self.clone();
        next.segments[idx] = self.segments[idx].add_liquidity(amounts)?;
        next.rebuild()?;
        Ok(next)
    }

    /// Checks a trade against a single segment; used by tests of the split.
    #[cfg(test)]
    fn segment_accepts(&self, idx: usize, input: usize, d: f64, out: f64) -> bool {
        super::check_acceptance(&self.segments[idx], input, d, out).is_ok()
    }
}
