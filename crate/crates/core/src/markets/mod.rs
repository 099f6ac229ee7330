//! Trading sets and their optimal-arbitrage subproblems.
//!
//! Every market here is a two-asset swap market. Local asset `0` is the
//! first entry of the market's [`TokenMap`], local asset `1` the second.
//! Direction `input = 0` means tendering asset 0 and receiving asset 1.
//!
//! For local prices `nu = (nu0, nu1)` the arbitrage problem is
//!
//! ```text
//! maximize  nu_out * f(delta) - nu_in * delta   subject to delta >= 0
//! ```
//!
//! in each direction, where `f` is the forward exchange function. The zero
//! trade is optimal whenever `f0'(0) <= nu0 / nu1 <= 1 / f1'(0)`.

mod aggregate;
mod bounded;
mod generic;
mod gmean;

use thiserror::Error;

use crate::network::{NetworkError, TokenMap, Trade};

pub use aggregate::AggregateMarket;
pub use bounded::{BoundedProductMarket, BoundedSegment};
pub use generic::{solve_swap_generic, Curve2Pool, FnCurve, GenericCurve, GenericSwapMarket};
pub use gmean::{GeomMeanMarket, GeomMeanPool};

/// Relative tolerance used when checking a proposed trade against the
/// acceptance condition.
pub const ACCEPTANCE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MarketError {
    #[error("local prices must be finite and strictly positive, got {0:?}")]
    NonPositivePrice(Vec<f64>),
    #[error("arbitrage is unbounded: {0}")]
    Unbounded(String),
    #[error("invalid market: {0}")]
    InvalidMarket(String),
    #[error("market configuration error: {0}")]
    Config(String),
    #[error("trade rejected: {0}")]
    RejectedTrade(String),
    #[error("operation not supported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Solution of one market's arbitrage problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ArbResult {
    pub trade: Trade,
    /// `nu^T Delta` for the returned trade; never negative.
    pub objective_value: f64,
}

impl ArbResult {
    pub fn zero(n: usize) -> Self {
        Self {
            trade: Trade::zero(n),
            objective_value: 0.0,
        }
    }

    /// Builds the result for a one-directional swap, falling back to the
    /// zero trade when rounding makes the value nonpositive.
    pub(crate) fn from_swap(prices: &[f64], sol: SwapSolution) -> Self {
        let input = sol.input;
        let value = prices[1 - input] * sol.amount_out - prices[input] * sol.amount_in;
        if sol.amount_in <= 0.0 || !(value > 0.0) {
            return Self::zero(2);
        }
        Self {
            trade: Trade::swap(input, sol.amount_in, sol.amount_out),
            objective_value: value,
        }
    }
}

/// A candidate trade in one direction of a swap market.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwapSolution {
    pub input: usize,
    pub amount_in: f64,
    pub amount_out: f64,
}

impl SwapSolution {
    pub fn none(input: usize) -> Self {
        Self {
            input,
            amount_in: 0.0,
            amount_out: 0.0,
        }
    }
}

/// Forward exchange behaviour of a two-asset market.
pub trait SwapCurve: Send + Sync {
    /// Largest output of asset `1 - input` for tendering `amount` of `input`.
    fn forward(&self, input: usize, amount: f64) -> f64;

    /// Right derivative of [`forward`](Self::forward) at `amount`.
    fn price_impact(&self, input: usize, amount: f64) -> f64;

    /// Smallest input that extracts all available output, `+inf` if the
    /// market never runs dry in this direction.
    fn max_input(&self, _input: usize) -> f64 {
        f64::INFINITY
    }

    /// Left derivative of the forward exchange function at
    /// [`max_input`](Self::max_input).
    fn min_supported_price(&self, input: usize) -> f64 {
        let d = self.max_input(input);
        if d.is_finite() && d > 0.0 {
            self.price_impact(input, d * (1.0 - 1e-12))
        } else {
            0.0
        }
    }
}

pub(crate) fn check_prices(prices: &[f64]) -> Result<(), MarketError> {
    if prices.len() != 2 {
        return Err(NetworkError::Dimension {
            expected: 2,
            got: prices.len(),
        }
        .into());
    }
    if prices.iter().all(|p| p.is_finite() && *p > 0.0) {
        Ok(())
    } else {
        Err(MarketError::NonPositivePrice(prices.to_vec()))
    }
}

pub(crate) fn check_fee(fee: f64) -> Result<(), MarketError> {
    if fee > 0.0 && fee <= 1.0 {
        Ok(())
    } else {
        Err(MarketError::InvalidMarket(format!(
            "fee {fee} outside (0, 1]"
        )))
    }
}

fn check_two_asset(tokens: &TokenMap) -> Result<(), MarketError> {
    if tokens.len() == 2 {
        Ok(())
    } else {
        Err(MarketError::InvalidMarket(format!(
            "expected a two-asset token map, got {} tokens",
            tokens.len()
        )))
    }
}

/// Identifies the tendered leg of a two-asset trade and checks its shape.
pub(crate) fn swap_leg(trade: &Trade) -> Result<Option<(usize, f64, f64)>, MarketError> {
    if trade.len() != 2 || trade.received.len() != 2 {
        return Err(NetworkError::Dimension {
            expected: 2,
            got: trade.len(),
        }
        .into());
    }
    if trade
        .tendered
        .iter()
        .chain(&trade.received)
        .any(|v| !v.is_finite() || *v < 0.0)
    {
        return Err(MarketError::RejectedTrade(
            "trade entries must be finite and nonnegative".into(),
        ));
    }
    match (trade.tendered[0] > 0.0, trade.tendered[1] > 0.0) {
        (true, true) => Err(MarketError::RejectedTrade(
            "a swap may tender at most one asset".into(),
        )),
        (false, false) => {
            if trade.received.iter().any(|&v| v > 0.0) {
                Err(MarketError::RejectedTrade(
                    "cannot receive without tendering".into(),
                ))
            } else {
                Ok(None)
            }
        }
        (a, _) => {
            let input = if a { 0 } else { 1 };
            if trade.received[input] > 0.0 {
                return Err(MarketError::RejectedTrade(
                    "cannot receive the tendered asset".into(),
                ));
            }
            Ok(Some((
                input,
                trade.tendered[input],
                trade.received[1 - input],
            )))
        }
    }
}

/// Acceptance check against the forward exchange function.
pub(crate) fn check_acceptance(
    curve: &dyn SwapCurve,
    input: usize,
    amount_in: f64,
    amount_out: f64,
) -> Result<(), MarketError> {
    let max_out = curve.forward(input, amount_in);
    if amount_out <= max_out * (1.0 + ACCEPTANCE_TOL) + f64::MIN_POSITIVE {
        Ok(())
    } else {
        Err(MarketError::RejectedTrade(format!(
            "requested {amount_out} out for {amount_in} in, market supplies at most {max_out}"
        )))
    }
}

/// Post-trade reserve update `R + tendered - received`, clamping rounding
/// noise within tolerance to zero.
pub(crate) fn updated_reserves(
    reserves: [f64; 2],
    input: usize,
    amount_in: f64,
    amount_out: f64,
) -> Result<[f64; 2], MarketError> {
    let out = 1 - input;
    let mut r = reserves;
    r[input] += amount_in;
    let left = reserves[out] - amount_out;
    if left < -ACCEPTANCE_TOL * reserves[out].max(1.0) {
        return Err(MarketError::RejectedTrade(format!(
            "requested {amount_out} exceeds reserve {}",
            reserves[out]
        )));
    }
    r[out] = left.max(0.0);
    Ok(r)
}

pub(crate) fn check_amounts(amounts: &[f64]) -> Result<(), MarketError> {
    if amounts.len() != 2 {
        return Err(NetworkError::Dimension {
            expected: 2,
            got: amounts.len(),
        }
        .into());
    }
    if amounts.iter().all(|a| a.is_finite() && *a >= 0.0) {
        Ok(())
    } else {
        Err(MarketError::Config(format!(
            "liquidity amounts must be finite and nonnegative, got {amounts:?}"
        )))
    }
}

/// One market of the network.
#[derive(Debug, Clone)]
pub enum Market {
    GeomMean(GeomMeanMarket),
    BoundedProduct(BoundedProductMarket),
    Aggregate(AggregateMarket),
    GenericSwap(GenericSwapMarket),
}

impl Market {
    pub fn tokens(&self) -> &TokenMap {
        match self {
            Market::GeomMean(m) => &m.tokens,
            Market::BoundedProduct(m) => &m.tokens,
            Market::Aggregate(m) => m.tokens(),
            Market::GenericSwap(m) => &m.tokens,
        }
    }

    /// Short name of the variant, matching the snapshot `type` tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Market::GeomMean(_) => "gmean",
            Market::BoundedProduct(_) => "bounded_product",
            Market::Aggregate(_) => "aggregate",
            Market::GenericSwap(m) => match m.curve {
                GenericCurve::Curve2(_) => "curve2",
                GenericCurve::Custom(_) => "custom",
            },
        }
    }

    /// Solves the market's optimal arbitrage problem at local prices `nu`.
    pub fn find_arb(&self, prices: &[f64]) -> Result<ArbResult, MarketError> {
        match self {
            Market::GeomMean(m) => m.pool.find_arb(prices),
            Market::BoundedProduct(m) => m.segment.find_arb(prices),
            Market::Aggregate(m) => m.find_arb(prices),
            Market::GenericSwap(m) => m.find_arb(prices),
        }
    }

    /// True iff the zero trade is optimal at `prices`.
    pub fn no_trade(&self, prices: &[f64]) -> Result<bool, MarketError> {
        check_prices(prices)?;
        match self {
            Market::Aggregate(m) => Ok(m.find_arb(prices)?.trade.is_zero()),
            _ => {
                let ratio = prices[0] / prices[1];
                Ok(self.spot_price(0) <= ratio && ratio * self.spot_price(1) <= 1.0)
            }
        }
    }

    /// Marginal rate `f'(0)` for tendering local asset `input`, in units of
    /// the other asset per unit of `input`.
    pub fn spot_price(&self, input: usize) -> f64 {
        match self {
            Market::GeomMean(m) => m.pool.price_impact(input, 0.0),
            Market::BoundedProduct(m) => m.segment.price_impact(input, 0.0),
            Market::Aggregate(m) => m.spot_price(input),
            Market::GenericSwap(m) => m.curve.price_impact(input, 0.0),
        }
    }

    /// Applies a trade, returning the updated market.
    pub fn swap(&self, trade: &Trade) -> Result<Market, MarketError> {
        Ok(match self {
            Market::GeomMean(m) => Market::GeomMean(GeomMeanMarket {
                pool: m.pool.swap(trade)?,
                tokens: m.tokens.clone(),
            }),
            Market::BoundedProduct(m) => Market::BoundedProduct(BoundedProductMarket {
                segment: m.segment.swap(trade)?,
                tokens: m.tokens.clone(),
            }),
            Market::Aggregate(m) => Market::Aggregate(m.swap(trade)?),
            Market::GenericSwap(m) => Market::GenericSwap(m.swap(trade)?),
        })
    }

    /// Adds liquidity. `range` selects the target segment of an aggregate
    /// market by its active interval and is ignored otherwise.
    pub fn update_liquidity(
        &self,
        amounts: &[f64],
        range: Option<(f64, f64)>,
    ) -> Result<Market, MarketError> {
        check_amounts(amounts)?;
        let amounts = [amounts[0], amounts[1]];
        Ok(match self {
            Market::GeomMean(m) => Market::GeomMean(GeomMeanMarket {
                pool: m.pool.add_liquidity(amounts)?,
                tokens: m.tokens.clone(),
            }),
            Market::BoundedProduct(m) => Market::BoundedProduct(BoundedProductMarket {
                segment: m.segment.add_liquidity(amounts)?,
                tokens: m.tokens.clone(),
            }),
            Market::Aggregate(m) => {
                let range = range.ok_or_else(|| {
                    MarketError::Config("aggregate markets need a target range".into())
                })?;
                Market::Aggregate(m.add_liquidity(range, amounts)?)
            }
            Market::GenericSwap(m) => Market::GenericSwap(m.add_liquidity(amounts)?),
        })
    }
}
