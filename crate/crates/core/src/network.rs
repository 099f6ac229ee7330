//! Asset universe, local/global token maps and trade vectors.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("dimension mismatch: expected length {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("asset universe needs at least two assets, got {0}")]
    TooFewAssets(usize),
    #[error("duplicate asset symbol `{0}`")]
    DuplicateSymbol(String),
    #[error("token index {index} out of range for a universe of {n} assets")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("token index {0} appears more than once in a token map")]
    RepeatedIndex(usize),
}

/// The ordered list of tradeable assets. Global index `j` is the position of
/// the symbol in the list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct AssetUniverse {
    symbols: Vec<String>,
}

impl AssetUniverse {
    pub fn new(symbols: Vec<String>) -> Result<Self, NetworkError> {
        if symbols.len() < 2 {
            return Err(NetworkError::TooFewAssets(symbols.len()));
        }
        let mut seen = HashSet::with_capacity(symbols.len());
        for s in &symbols {
            if !seen.insert(s.as_str()) {
                return Err(NetworkError::DuplicateSymbol(s.clone()));
            }
        }
        Ok(Self { symbols })
    }

    /// Universe with generated symbols `T0, T1, ...`.
    pub fn numbered(n: usize) -> Result<Self, NetworkError> {
        Self::new((0..n).map(|j| format!("T{j}")).collect())
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn symbol(&self, index: usize) -> Option<&str> {
        self.symbols.get(index).map(String::as_str)
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == symbol)
    }
}

impl TryFrom<Vec<String>> for AssetUniverse {
    type Error = NetworkError;

    fn try_from(symbols: Vec<String>) -> Result<Self, Self::Error> {
        Self::new(symbols)
    }
}

impl From<AssetUniverse> for Vec<String> {
    fn from(u: AssetUniverse) -> Self {
        u.symbols
    }
}

/// Maps a market's local token order onto global indices. This is the
/// selection matrix `A_i` stored as the list of global indices of its
/// columns.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenMap {
    global_indices: Vec<usize>,
}

impl TokenMap {
    /// Builds a map without checking it against a universe size. Indices must
    /// still be distinct.
    pub fn new(global_indices: Vec<usize>) -> Result<Self, NetworkError> {
        let mut seen = HashSet::with_capacity(global_indices.len());
        for &j in &global_indices {
            if !seen.insert(j) {
                return Err(NetworkError::RepeatedIndex(j));
            }
        }
        Ok(Self { global_indices })
    }

    pub fn pair(a: usize, b: usize) -> Result<Self, NetworkError> {
        Self::new(vec![a, b])
    }

    /// Checks every entry against a universe of `n` assets.
    pub fn validate(&self, n: usize) -> Result<(), NetworkError> {
        match self.global_indices.iter().find(|&&j| j >= n) {
            Some(&index) => Err(NetworkError::IndexOutOfRange { index, n }),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.global_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.global_indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.global_indices
    }

    /// Places `local` into a zero vector of length `n`.
    pub fn scatter(&self, local: &[f64], n: usize) -> Result<Vec<f64>, NetworkError> {
        self.validate(n)?;
        let mut out = vec![0.0; n];
        self.scatter_add(local, &mut out)?;
        Ok(out)
    }

    /// Adds `local` into `global` at the mapped positions.
    pub fn scatter_add(&self, local: &[f64], global: &mut [f64]) -> Result<(), NetworkError> {
        if local.len() != self.len() {
            return Err(NetworkError::Dimension {
                expected: self.len(),
                got: local.len(),
            });
        }
        let n = global.len();
        for (&j, &v) in self.global_indices.iter().zip(local) {
            let slot = global
                .get_mut(j)
                .ok_or(NetworkError::IndexOutOfRange { index: j, n })?;
            *slot += v;
        }
        Ok(())
    }

    /// Reads the mapped entries of `global` in local order (`A_i^T nu`).
    pub fn gather(&self, global: &[f64]) -> Result<Vec<f64>, NetworkError> {
        self.global_indices
            .iter()
            .map(|&j| {
                global.get(j).copied().ok_or(NetworkError::IndexOutOfRange {
                    index: j,
                    n: global.len(),
                })
            })
            .collect()
    }
}

/// Per-market trade split into the nonnegative tendered and received baskets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    pub tendered: Vec<f64>,
    pub received: Vec<f64>,
}

impl Trade {
    pub fn zero(n: usize) -> Self {
        Self {
            tendered: vec![0.0; n],
            received: vec![0.0; n],
        }
    }

    /// Splits a signed basket (positive = received) into its two parts.
    pub fn from_signed(delta: &[f64]) -> Self {
        Self {
            tendered: delta.iter().map(|&d| (-d).max(0.0)).collect(),
            received: delta.iter().map(|&d| d.max(0.0)).collect(),
        }
    }

    /// Two-asset trade tendering `amount_in` of local asset `input` and
    /// receiving `amount_out` of the other one.
    pub fn swap(input: usize, amount_in: f64, amount_out: f64) -> Self {
        let mut t = Self::zero(2);
        t.tendered[input] = amount_in;
        t.received[1 - input] = amount_out;
        t
    }

    pub fn len(&self) -> usize {
        self.tendered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tendered.is_empty()
    }

    pub fn signed(&self) -> Vec<f64> {
        self.received
            .iter()
            .zip(&self.tendered)
            .map(|(r, t)| r - t)
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.tendered
            .iter()
            .chain(&self.received)
            .all(|&v| v == 0.0)
    }

    /// `nu^T (received - tendered)`.
    pub fn value(&self, local_prices: &[f64]) -> f64 {
        local_prices
            .iter()
            .zip(self.received.iter().zip(&self.tendered))
            .map(|(p, (r, t))| p * (r - t))
            .sum()
    }
}

/// Net basket received across all markets, in global indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkTrade {
    pub psi: Vec<f64>,
}

impl NetworkTrade {
    pub fn zero(n: usize) -> Self {
        Self { psi: vec![0.0; n] }
    }

    /// Accumulates the signed trades of each market through its token map,
    /// in market order.
    pub fn from_trades<'a, I>(n: usize, parts: I) -> Result<Self, NetworkError>
    where
        I: IntoIterator<Item = (&'a TokenMap, &'a Trade)>,
    {
        let mut psi = vec![0.0; n];
        for (map, trade) in parts {
            if trade.len() != map.len() || trade.received.len() != map.len() {
                return Err(NetworkError::Dimension {
                    expected: map.len(),
                    got: trade.len(),
                });
            }
            map.scatter_add(&trade.signed(), &mut psi)?;
        }
        Ok(Self { psi })
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn scatter_places_local_values() {
        let map = TokenMap::pair(1, 2).unwrap();
        assert_eq!(map.scatter(&[5.0, -3.0], 3).unwrap(), vec![0.0, 5.0, -3.0]);
        assert_eq!(map.scatter(&[0.0, 0.0], 3).unwrap(), vec![0.0; 3]);
        let perm = TokenMap::pair(2, 0).unwrap();
        assert_eq!(perm.scatter(&[1.0, 4.0], 3).unwrap(), vec![4.0, 0.0, 1.0]);
    }

    #[test]
    fn gather_selects_in_local_order() {
        let map = TokenMap::pair(1, 2).unwrap();
        assert_eq!(map.gather(&[7.0, 8.0, 9.0]).unwrap(), vec![8.0, 9.0]);
        let perm = TokenMap::pair(2, 0).unwrap();
        assert_eq!(perm.gather(&[1.0, 2.0, 3.0]).unwrap(), vec![3.0, 1.0]);
    }

    #[test]
    fn dimension_errors() {
        let map = TokenMap::pair(0, 1).unwrap();
        assert!(matches!(
            map.scatter(&[1.0], 3),
            Err(NetworkError::Dimension {
                expected: 2,
                got: 1
            })
        ));
        assert!(matches!(
            map.gather(&[1.0]),
            Err(NetworkError::IndexOutOfRange { index: 1, n: 1 })
        ));
        assert!(matches!(
            TokenMap::pair(0, 5).unwrap().scatter(&[1.0, 1.0], 3),
            Err(NetworkError::IndexOutOfRange { index: 5, n: 3 })
        ));
        assert_eq!(TokenMap::pair(1, 1), Err(NetworkError::RepeatedIndex(1)));
    }

    #[test]
    fn universe_validation() {
        assert!(AssetUniverse::new(vec!["A".into()]).is_err());
        assert_eq!(
            AssetUniverse::new(vec!["A".into(), "B".into(), "A".into()]),
            Err(NetworkError::DuplicateSymbol("A".into()))
        );
        let u = AssetUniverse::numbered(3).unwrap();
        assert_eq!(u.index_of("T2"), Some(2));
        assert_eq!(u.symbol(0), Some("T0"));
    }

    #[test]
    fn trade_split_and_value() {
        let t = Trade::from_signed(&[-2.0, 3.0]);
        assert_eq!(t.tendered, vec![2.0, 0.0]);
        assert_eq!(t.received, vec![0.0, 3.0]);
        assert_eq!(t.signed(), vec![-2.0, 3.0]);
        assert_eq!(t.value(&[1.0, 2.0]), 4.0);
        assert!(Trade::zero(2).is_zero());
    }

    #[test]
    fn network_trade_sums_markets() {
        let a = TokenMap::pair(0, 1).unwrap();
        let b = TokenMap::pair(1, 2).unwrap();
        let ta = Trade::from_signed(&[-1.0, 2.0]);
        let tb = Trade::from_signed(&[-2.0, 3.0]);
        let psi = NetworkTrade::from_trades(3, [(&a, &ta), (&b, &tb)]).unwrap();
        assert_eq!(psi.psi, vec![-1.0, 0.0, 3.0]);
        let zero = Trade::zero(2);
        let psi = NetworkTrade::from_trades(3, [(&a, &zero), (&b, &zero)]).unwrap();
        assert_eq!(psi.psi, vec![0.0; 3]);
    }

    fn map_and_vec() -> impl Strategy<Value = (usize, Vec<usize>, Vec<f64>)> {
        (2usize..12).prop_flat_map(|n| {
            (1usize..=n).prop_flat_map(move |k| {
                (
                    Just(n),
                    Just((0..n).collect::<Vec<_>>())
                        .prop_shuffle()
                        .prop_map(move |v| v[..k].to_vec()),
                    prop::collection::vec(-1e6f64..1e6, k),
                )
            })
        })
    }

    proptest! {
        #[test]
        fn gather_after_scatter_is_identity((n, idx, local) in map_and_vec()) {
            let map = TokenMap::new(idx).unwrap();
            let global = map.scatter(&local, n).unwrap();
            prop_assert_eq!(map.gather(&global).unwrap(), local);
        }

        #[test]
        fn net_trade_is_linear(
            a in prop::collection::vec(-100.0f64..100.0, 2),
            b in prop::collection::vec(-100.0f64..100.0, 2),
        ) {
            let map = TokenMap::pair(2, 0).unwrap();
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let ta = Trade::from_signed(&a);
            let tb = Trade::from_signed(&b);
            let ts = Trade::from_signed(&sum);
            let lhs = NetworkTrade::from_trades(3, [(&map, &ts)]).unwrap();
            let rhs = NetworkTrade::from_trades(3, [(&map, &ta), (&map, &tb)]).unwrap();
            for (l, r) in lhs.psi.iter().zip(&rhs.psi) {
                prop_assert!((l - r).abs() <= 1e-12 * (1.0 + l.abs()));
            }
        }
    }
}
