//! Utility functions of the network trade, through their conjugates.
//!
//! The solver never evaluates `U` during the dual solve; it needs
//! `Ubar(nu) = sup_Psi U(Psi) - nu^T Psi`, its gradient `-Psi*`, and the box
//! on which `Ubar` is finite.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{NetworkError, NetworkTrade, Trade};
use crate::snapshot::MarketSnapshot;

/// Positive floor on dual prices whose conjugate bound would allow zero.
pub const PRICE_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObjectiveError {
    #[error("objective has {got} entries, universe has {expected} assets")]
    Dimension { expected: usize, got: usize },
    #[error("invalid objective: {0}")]
    Invalid(String),
    #[error("prices outside the conjugate's domain: {0}")]
    Domain(String),
}

/// `U(Psi) = c^T Psi` subject to `Psi >= 0`: collect a nonnegative basket of
/// value `c`, tendering nothing net.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TotalArbitrage {
    pub prices: Vec<f64>,
}

/// `U(Psi) = Psi_t` subject to `Psi >= -basket`: sell the basket for as much
/// of `out_token` as possible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasketLiquidation {
    pub basket: Vec<f64>,
    pub out_token: usize,
}

/// Problem objective, as it appears in problem JSON:
/// `{"objective":"arbitrage","prices":[...]}` or
/// `{"objective":"liquidate","basket":[...],"out_token":k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "objective")]
pub enum Objective {
    #[serde(rename = "arbitrage")]
    TotalArbitrage(TotalArbitrage),
    #[serde(rename = "liquidate")]
    BasketLiquidation(BasketLiquidation),
}

impl Objective {
    pub fn arbitrage(prices: Vec<f64>) -> Self {
        Objective::TotalArbitrage(TotalArbitrage { prices })
    }

    pub fn liquidate(basket: Vec<f64>, out_token: usize) -> Self {
        Objective::BasketLiquidation(BasketLiquidation { basket, out_token })
    }

    pub fn dim(&self) -> usize {
        match self {
            Objective::TotalArbitrage(o) => o.prices.len(),
            Objective::BasketLiquidation(o) => o.basket.len(),
        }
    }

    pub fn validate(&self, n: usize) -> Result<(), ObjectiveError> {
        if self.dim() != n {
            return Err(ObjectiveError::Dimension {
                expected: n,
                got: self.dim(),
            });
        }
        match self {
            Objective::TotalArbitrage(o) => {
                if o.prices.iter().any(|c| !c.is_finite() || *c < 0.0) {
                    return Err(ObjectiveError::Invalid(
                        "valuation must be finite and nonnegative".into(),
                    ));
                }
                if !o.prices.iter().any(|&c| c > 0.0) {
                    return Err(ObjectiveError::Invalid(
                        "valuation needs a positive entry".into(),
                    ));
                }
            }
            Objective::BasketLiquidation(o) => {
                if o.out_token >= n {
                    return Err(ObjectiveError::Invalid(format!(
                        "out token {} outside universe of {n}",
                        o.out_token
                    )));
                }
                if o.basket.iter().any(|b| !b.is_finite() || *b < 0.0) {
                    return Err(ObjectiveError::Invalid(
                        "basket must be finite and nonnegative".into(),
                    ));
                }
                if o.basket[o.out_token] != 0.0 {
                    return Err(ObjectiveError::Invalid(
                        "basket cannot contain the out token".into(),
                    ));
                }
                if !o.basket.iter().any(|&b| b > 0.0) {
                    return Err(ObjectiveError::Invalid("basket is empty".into()));
                }
            }
        }
        Ok(())
    }

    /// Lower and upper dual bounds. The upper bound is always `+inf`.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.dim();
        let lower = match self {
            Objective::TotalArbitrage(o) => o.prices.clone(),
            Objective::BasketLiquidation(o) => (0..n)
                .map(|j| if j == o.out_token { 1.0 } else { PRICE_FLOOR })
                .collect(),
        };
        (lower, vec![f64::INFINITY; n])
    }

    /// Finite region of the conjugate: `nu >= c` for arbitrage, `nu >= e_t`
    /// for liquidation.
    fn in_domain(&self, nu: &[f64]) -> bool {
        if nu.len() != self.dim() || nu.iter().any(|v| v.is_nan()) {
            return false;
        }
        match self {
            Objective::TotalArbitrage(o) => nu.iter().zip(&o.prices).all(|(v, c)| v >= c),
            Objective::BasketLiquidation(o) => nu
                .iter()
                .enumerate()
                .all(|(j, &v)| v >= if j == o.out_token { 1.0 } else { 0.0 }),
        }
    }

    /// `Ubar(nu)`, `+inf` outside the finite region.
    pub fn conjugate(&self, nu: &[f64]) -> f64 {
        if !self.in_domain(nu) {
            return f64::INFINITY;
        }
        match self {
            Objective::TotalArbitrage(_) => 0.0,
            Objective::BasketLiquidation(o) => nu.iter().zip(&o.basket).map(|(v, b)| v * b).sum(),
        }
    }

    /// `grad Ubar(nu) = -Psi*`.
    pub fn conjugate_gradient(&self, nu: &[f64]) -> Result<Vec<f64>, ObjectiveError> {
        if !self.in_domain(nu) {
            return Err(ObjectiveError::Domain(format!("{nu:?}")));
        }
        Ok(match self {
            Objective::TotalArbitrage(o) => vec![0.0; o.prices.len()],
            Objective::BasketLiquidation(o) => o.basket.clone(),
        })
    }

    /// `U(Psi)`, treating constraint violations up to `tol` as feasible.
    /// Returns `-inf` for infeasible network trades.
    pub fn utility(&self, psi: &[f64], tol: f64) -> f64 {
        if psi.len() != self.dim() {
            return f64::NEG_INFINITY;
        }
        match self {
            Objective::TotalArbitrage(o) => {
                if psi.iter().any(|&p| p < -tol) {
                    return f64::NEG_INFINITY;
                }
                psi.iter().zip(&o.prices).map(|(p, c)| p * c).sum()
            }
            Objective::BasketLiquidation(o) => {
                if psi.iter().zip(&o.basket).any(|(&p, &b)| p < -b - tol) {
                    return f64::NEG_INFINITY;
                }
                psi[o.out_token]
            }
        }
    }

    /// Lower limit of the feasible network trade (`0` or `-basket`).
    pub fn psi_floor(&self) -> Vec<f64> {
        match self {
            Objective::TotalArbitrage(o) => vec![0.0; o.prices.len()],
            Objective::BasketLiquidation(o) => o.basket.iter().map(|b| -b).collect(),
        }
    }
}

/// Builds `Psi*` from the per-market solutions so the coupling constraint
/// holds exactly.
pub fn recover_primal(
    snapshot: &MarketSnapshot,
    trades: &[Trade],
) -> Result<NetworkTrade, NetworkError> {
    snapshot.net_trade(trades)
}
