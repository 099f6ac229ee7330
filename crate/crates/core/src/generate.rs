//! Seeded random instances.
//!
//! All randomness comes from ChaCha8 seeded with the user seed. Stream `0`
//! draws the reference prices and stream `i + 1` draws market `i`, so each
//! market depends only on `(seed, i)` and not on how many markets precede
//! it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::markets::{
    AggregateMarket, BoundedSegment, GeomMeanMarket, GeomMeanPool, Market, MarketError,
};
use crate::network::{AssetUniverse, TokenMap};
use crate::snapshot::{GeneratorInfo, MarketSnapshot};

/// Name recorded in generated snapshot headers.
pub const GENERATOR_NAME: &str = "chacha8/stream-per-market";

pub const DEFAULT_FEE: f64 = 0.997;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// `ceil(2 sqrt(m))`, at least 2.
pub fn token_count(m: usize) -> usize {
    ((2.0 * (m as f64).sqrt()).ceil() as usize).max(2)
}

fn distinct_pair(rng: &mut ChaCha8Rng, n: usize) -> (usize, usize) {
    let a = rng.gen_range(0..n);
    let mut b = rng.gen_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    (a, b)
}

fn random_pool(rng: &mut ChaCha8Rng, fee: f64) -> Result<GeomMeanPool, MarketError> {
    let product = rng.gen_bool(0.5);
    let reserves = [rng.gen_range(1000.0..2000.0), rng.gen_range(1000.0..2000.0)];
    if product {
        GeomMeanPool::product(reserves, fee)
    } else {
        GeomMeanPool::new(reserves, 0.8, fee)
    }
}

fn header(seed: u64, fee: f64) -> GeneratorInfo {
    GeneratorInfo {
        name: GENERATOR_NAME.into(),
        seed,
        fee,
    }
}

/// `m` swap markets over `ceil(2 sqrt(m))` tokens with reserves drawn from
/// `U(1000, 2000)`; each market is constant product or geometric mean with
/// weights `(0.8, 0.2)` with equal probability. Also draws reference prices
/// `p_j ~ U(0, 1)`.
pub fn random_instance(m: usize, seed: u64, fee: f64) -> Result<MarketSnapshot, MarketError> {
    let n = token_count(m);
    let mut markets = Vec::with_capacity(m);
    for i in 0..m {
        let mut rng = stream(seed, i as u64 + 1);
        // Pool draws come first so they do not depend on the token count.
        let pool = random_pool(&mut rng, fee)?;
        let (a, b) = distinct_pair(&mut rng, n);
        markets.push(Market::GeomMean(GeomMeanMarket::new(
            pool,
            TokenMap::pair(a, b)?,
        )?));
    }
    let mut rng = stream(seed, 0);
    let prices = (0..n).map(|_| 1.0 - rng.gen::<f64>()).collect();
    let universe = AssetUniverse::numbered(n)?;
    let mut snap =
        MarketSnapshot::new(universe, markets).map_err(|e| MarketError::Config(e.to_string()))?;
    snap.generator = Some(header(seed, fee));
    snap.prices = Some(prices);
    Ok(snap)
}

/// Like [`random_instance`] but every market's spot price matches the
/// reference prices, so prices close enough to them sit inside every
/// spread. Returns the snapshot and a price vector drawn inside all spreads.
pub fn clearing_instance(
    m: usize,
    seed: u64,
    fee: f64,
) -> Result<(MarketSnapshot, Vec<f64>), MarketError> {
    let mut snap = random_instance(m, seed, fee)?;
    let p = snap.prices.clone().unwrap_or_default();
    for mk in snap.markets.iter_mut() {
        if let Market::GeomMean(g) = mk {
            let [a, b] = [g.tokens.indices()[0], g.tokens.indices()[1]];
            let w = g.pool.weight;
            // Spot rate w R1 / ((1 - w) R0) equals p_a / p_b.
            let r0 = g.pool.reserves[0];
            let r1 = r0 * (1.0 - w) / w * p[a] / p[b];
            g.pool = GeomMeanPool::new([r0, r1], w, fee)?;
        }
    }
    let mut rng = stream(seed, u64::MAX);
    // Keep every pairwise ratio within a factor of the fee band.
    let half_band = -0.49 * fee.ln();
    let nu = p
        .iter()
        .map(|v| v * (rng.gen_range(-half_band..=half_band)).exp())
        .collect();
    Ok((snap, nu))
}

/// Aggregate market of `s` segments on touching intervals
/// `(r^k, r^(k+1))`, centred on price 1, with reserves drawn from
/// `U(1, 10)` in each asset.
pub fn ladder(s: usize, seed: u64, fee: f64, ratio: f64) -> Result<AggregateMarket, MarketError> {
    let mut rng = stream(seed, 0);
    let centre = s as f64 / 2.0;
    let segments = (0..s)
        .map(|k| {
            let lo = ratio.powf(k as f64 - centre);
            let hi = ratio.powf(k as f64 + 1.0 - centre);
            let reserves = [rng.gen_range(1.0..10.0), rng.gen_range(1.0..10.0)];
            BoundedSegment::in_interval(reserves, lo, hi, fee)
        })
        .collect::<Result<Vec<_>, _>>()?;
    AggregateMarket::new(segments, fee, TokenMap::pair(0, 1)?)
}

/// Token pools A/B, B/C and A/C. The direct A/C pool is shallow, the two
/// legs through B are deep.
pub fn triangle(fee: f64) -> Result<MarketSnapshot, MarketError> {
    let universe = AssetUniverse::new(vec!["A".into(), "B".into(), "C".into()])?;
    let pool = |a, b, r: [f64; 2]| -> Result<Market, MarketError> {
        Ok(Market::GeomMean(GeomMeanMarket::new(
            GeomMeanPool::product(r, fee)?,
            TokenMap::pair(a, b)?,
        )?))
    };
    let markets = vec![
        pool(0, 1, [4000.0, 4000.0])?,
        pool(1, 2, [4000.0, 4000.0])?,
        pool(0, 2, [1000.0, 1000.0])?,
    ];
    MarketSnapshot::new(universe, markets).map_err(|e| MarketError::Config(e.to_string()))
}
