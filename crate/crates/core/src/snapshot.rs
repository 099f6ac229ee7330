//! Market snapshot: the asset universe plus every market, and its JSON form.
//!
//! ```json
//! {
//!   "assets": ["WETH", "USDC", "USDT"],
//!   "markets": [
//!     {"type": "gmean", "tokens": [0,1], "reserves": [10, 20000], "weights": [0.5, 0.5], "fee": 0.997},
//!     {"type": "bounded_product", "tokens": [0,1], "reserves": [1, 2], "alpha": 3, "beta": 4, "fee": 0.997},
//!     {"type": "aggregate", "tokens": [0,1], "fee": 0.997,
//!      "segments": [{"reserves": [1, 2], "alpha": 3, "beta": 4}]},
//!     {"type": "curve2", "tokens": [1,2], "reserves": [1000, 1000], "amp": 10, "fee": 0.9999}
//!   ]
//! }
//! ```
//!
//! Generated snapshots also carry a `generator` header and reference
//! `prices`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::markets::{
    AggregateMarket, BoundedProductMarket, BoundedSegment, Curve2Pool, GenericCurve,
    GenericSwapMarket, GeomMeanMarket, GeomMeanPool, Market, MarketError,
};
use crate::network::{AssetUniverse, NetworkError, NetworkTrade, TokenMap, Trade};

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("malformed snapshot JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cannot read snapshot: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("market {index}: {source}")]
    Market {
        index: usize,
        #[source]
        source: MarketError,
    },
}

/// Provenance of a generated snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorInfo {
    pub name: String,
    pub seed: u64,
    pub fee: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub reserves: [f64; 2],
    pub alpha: f64,
    pub beta: f64,
}

/// Serialized form of one market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MarketSpec {
    #[serde(rename = "gmean")]
    GeomMean {
        tokens: Vec<usize>,
        reserves: [f64; 2],
        weights: [f64; 2],
        fee: f64,
    },
    BoundedProduct {
        tokens: Vec<usize>,
        reserves: [f64; 2],
        alpha: f64,
        beta: f64,
        fee: f64,
    },
    Aggregate {
        tokens: Vec<usize>,
        fee: f64,
        segments: Vec<SegmentSpec>,
    },
    Curve2 {
        tokens: Vec<usize>,
        reserves: [f64; 2],
        amp: f64,
        fee: f64,
    },
}

impl MarketSpec {
    pub fn build(&self, n: usize) -> Result<Market, MarketError> {
        let tokens = |idx: &[usize]| -> Result<TokenMap, MarketError> {
            let map = TokenMap::new(idx.to_vec())?;
            map.validate(n)?;
            Ok(map)
        };
        Ok(match self {
            MarketSpec::GeomMean {
                tokens: t,
                reserves,
                weights,
                fee,
            } => {
                if (weights[0] + weights[1] - 1.0).abs() > 1e-12 {
                    return Err(MarketError::InvalidMarket(format!(
                        "weights {weights:?} do not sum to one"
                    )));
                }
                Market::GeomMean(GeomMeanMarket::new(
                    GeomMeanPool::new(*reserves, weights[0], *fee)?,
                    tokens(t)?,
                )?)
            }
            MarketSpec::BoundedProduct {
                tokens: t,
                reserves,
                alpha,
                beta,
                fee,
            } => Market::BoundedProduct(BoundedProductMarket::new(
                BoundedSegment::new(*reserves, *alpha, *beta, *fee)?,
                tokens(t)?,
            )?),
            MarketSpec::Aggregate {
                tokens: t,
                fee,
                segments,
            } => {
                let segs = segments
                    .iter()
                    .map(|s| BoundedSegment::new(s.reserves, s.alpha, s.beta, *fee))
                    .collect::<Result<Vec<_>, _>>()?;
                Market::Aggregate(AggregateMarket::new(segs, *fee, tokens(t)?)?)
            }
            MarketSpec::Curve2 {
                tokens: t,
                reserves,
                amp,
                fee,
            } => Market::GenericSwap(GenericSwapMarket::new(
                GenericCurve::Curve2(Curve2Pool::new(*reserves, *amp, *fee)?),
                tokens(t)?,
            )?),
        })
    }

    pub fn from_market(market: &Market) -> Result<Self, MarketError> {
        let tokens = market.tokens().indices().to_vec();
        Ok(match market {
            Market::GeomMean(m) => MarketSpec::GeomMean {
                tokens,
                reserves: m.pool.reserves,
                weights: [m.pool.weight, 1.0 - m.pool.weight],
                fee: m.pool.fee,
            },
            Market::BoundedProduct(m) => MarketSpec::BoundedProduct {
                tokens,
                reserves: m.segment.reserves,
                alpha: m.segment.alpha,
                beta: m.segment.beta,
                fee: m.segment.fee,
            },
            Market::Aggregate(m) => MarketSpec::Aggregate {
                tokens,
                fee: m.fee(),
                segments: m
                    .segments()
                    .iter()
                    .map(|s| SegmentSpec {
                        reserves: s.reserves,
                        alpha: s.alpha,
                        beta: s.beta,
                    })
                    .collect(),
            },
            Market::GenericSwap(m) => match &m.curve {
                GenericCurve::Curve2(c) => MarketSpec::Curve2 {
                    tokens,
                    reserves: c.reserves,
                    amp: c.amp,
                    fee: c.fee,
                },
                GenericCurve::Custom(_) => {
                    return Err(MarketError::Unsupported(
                        "custom swap curves cannot be serialized".into(),
                    ))
                }
            },
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SnapshotFile {
    assets: Vec<String>,
    markets: Vec<MarketSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    generator: Option<GeneratorInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prices: Option<Vec<f64>>,
}

/// The full routing problem data.
#[derive(Debug, Clone)]
pub struct MarketSnapshot {
    pub universe: AssetUniverse,
    pub markets: Vec<Market>,
    pub generator: Option<GeneratorInfo>,
    /// Reference prices, one per asset, when the snapshot carries them.
    pub prices: Option<Vec<f64>>,
}

impl MarketSnapshot {
    pub fn new(universe: AssetUniverse, markets: Vec<Market>) -> Result<Self, SnapshotError> {
        let n = universe.len();
        for (index, m) in markets.iter().enumerate() {
            m.tokens().validate(n).map_err(|e| SnapshotError::Market {
                index,
                source: e.into(),
            })?;
        }
        Ok(Self {
            universe,
            markets,
            generator: None,
            prices: None,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.universe.len()
    }

    pub fn from_json(text: &str) -> Result<Self, SnapshotError> {
        let file: SnapshotFile = serde_json::from_str(text)?;
        let universe = AssetUniverse::new(file.assets)?;
        let n = universe.len();
        let markets = file
            .markets
            .iter()
            .enumerate()
            .map(|(index, spec)| {
                spec.build(n)
                    .map_err(|source| SnapshotError::Market { index, source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(p) = &file.prices {
            if p.len() != n {
                return Err(NetworkError::Dimension {
                    expected: n,
                    got: p.len(),
                }
                .into());
            }
        }
        Ok(Self {
            universe,
            markets,
            generator: file.generator,
            prices: file.prices,
        })
    }

    pub fn to_json(&self) -> Result<String, SnapshotError> {
        let markets = self
            .markets
            .iter()
            .enumerate()
            .map(|(index, m)| {
                MarketSpec::from_market(m).map_err(|source| SnapshotError::Market { index, source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let file = SnapshotFile {
            assets: self.universe.symbols().to_vec(),
            markets,
            generator: self.generator.clone(),
            prices: self.prices.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SnapshotError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SnapshotError> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    /// `Psi = sum_i A_i (received_i - tendered_i)`, summed in market order.
    pub fn net_trade(&self, trades: &[Trade]) -> Result<NetworkTrade, NetworkError> {
        if trades.len() != self.markets.len() {
            return Err(NetworkError::Dimension {
                expected: self.markets.len(),
                got: trades.len(),
            });
        }
        NetworkTrade::from_trades(
            self.n_assets(),
            self.markets.iter().map(Market::tokens).zip(trades),
        )
    }
}
