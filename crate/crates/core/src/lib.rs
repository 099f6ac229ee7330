//! Optimal routing of trades across a network of constant function market
//! makers (CFMMs).
//!
//! The routing problem couples per-market trades through a single linear
//! constraint. Relaxing that constraint with a price vector `nu` splits the
//! problem into a utility conjugate plus one optimal-arbitrage problem per
//! market; the resulting convex dual function is minimized over a box with a
//! limited-memory quasi-Newton method and the routed trades are read off the
//! arbitrage solutions at the optimal prices.
//!
//! Module map:
//!
//! - [`network`]: asset universe, local/global index maps, trades and the
//!   network trade vector.
//! - [`snapshot`]: the market snapshot data model and its JSON format.
//! - [`markets`]: trading-set variants and their optimal-arbitrage solvers.
//! - [`objectives`]: utility conjugates, gradients and dual bounds.
//! - [`solver`]: the dual function and the box-constrained minimizer.
//! - [`oracle`]: independent reference solvers used for validation.
//! - [`generate`]: seeded random instance generation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod generate;
pub mod markets;
pub mod network;
pub mod objectives;
pub mod oracle;
pub mod snapshot;
pub mod solver;

pub use markets::{ArbResult, Market, MarketError};
pub use network::{AssetUniverse, NetworkTrade, TokenMap, Trade};
pub use objectives::Objective;
pub use snapshot::MarketSnapshot;
pub use solver::{RoutingSolution, SolverConfig, SolverError};
