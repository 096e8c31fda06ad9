//! Harsanyi dividends of the masked-output game, via Möbius inversion over
//! the subset lattice:
//!
//! ```text
//! H(S) = sum_{T ⊆ S} (-1)^{|S|-|T|} f_T(x)
//! ```
//!
//! `H(∅)` is taken to be `f_∅(x)`, so `f_T(x) = sum_{S ⊆ T} H(S)` for every `T`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::masking::{dump_json, CoalitionKey, CoalitionValueTable, Sigma};

/// Dividends for every coalition whose subsets are all in the table.
#[derive(Clone, Debug, PartialEq)]
pub struct DividendMap {
    d: usize,
    sigma: Sigma,
    store: DividendStore,
}

#[derive(Clone, Debug, PartialEq)]
enum DividendStore {
    Dense(Vec<f64>),
    Sparse(BTreeMap<CoalitionKey, f64>),
}

impl DividendMap {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn sigma(&self) -> Sigma {
        self.sigma
    }

    pub fn get(&self, key: CoalitionKey) -> Option<f64> {
        match &self.store {
            DividendStore::Dense(v) => v.get(key.bits() as usize).copied(),
            DividendStore::Sparse(m) => m.get(&key).copied(),
        }
    }

    pub fn value(&self, key: CoalitionKey) -> Result<f64> {
        self.get(key).ok_or_else(|| Error::MissingCoalition(key.to_bit_string(self.d)))
    }

    /// `(S, H(S))` for every stored coalition, canonical order.
    pub fn entries(&self) -> Vec<(CoalitionKey, f64)> {
        match &self.store {
            DividendStore::Dense(v) => {
                let mut e: Vec<_> = v.iter().enumerate().map(|(m, h)| (CoalitionKey(m as u64), *h)).collect();
                e.sort_by_key(|(k, _)| *k);
                e
            }
            DividendStore::Sparse(m) => m.iter().map(|(k, h)| (*k, *h)).collect(),
        }
    }

    /// Calls `f(S, H(S))` for each stored coalition with `|S| > 1`.
    pub fn for_each_interaction(&self, mut f: impl FnMut(CoalitionKey, f64)) {
        match &self.store {
            DividendStore::Dense(v) => {
                for (m, h) in v.iter().enumerate() {
                    let key = CoalitionKey(m as u64);
                    if key.len() > 1 {
                        f(key, *h);
                    }
                }
            }
            DividendStore::Sparse(map) => {
                for (key, h) in map {
                    if key.len() > 1 {
                        f(*key, *h);
                    }
                }
            }
        }
    }

    pub fn to_dump_json(&self) -> serde_json::Value {
        dump_json(self.d, self.entries())
    }
}

/// Inclusion–exclusion for a single coalition.
pub fn harsanyi(table: &CoalitionValueTable, coalition: CoalitionKey) -> Result<f64> {
    let s = coalition.len();
    let mut acc = 0.0;
    for t in coalition.subsets() {
        let v = table.value(t)?;
        if (s - t.len()).is_multiple_of(2) {
            acc += v;
        } else {
            acc -= v;
        }
    }
    Ok(acc)
}

/// Dividends for the whole table. Full tables use the in-place subset
/// Möbius transform (`d * 2^d` operations); capped tables get every
/// coalition of at most `sigma` members by per-coalition inclusion–exclusion.
pub fn harsanyi_all(table: &CoalitionValueTable) -> Result<DividendMap> {
    let d = table.dim();
    if let Some(values) = table.dense_values() {
        let mut h = values.into_owned();
        for bit in 0..d {
            let step = 1usize << bit;
            for block in h.chunks_exact_mut(step * 2) {
                let (lo, hi) = block.split_at_mut(step);
                for (l, u) in lo.iter().zip(hi.iter_mut()) {
                    *u -= *l;
                }
            }
        }
        return Ok(DividendMap { d, sigma: table.sigma(), store: DividendStore::Dense(h) });
    }
    let cap = table.sigma().cap(d);
    let mut map = BTreeMap::new();
    for (key, _) in table.entries() {
        if key.len() <= cap {
            map.insert(key, harsanyi(table, key)?);
        }
    }
    Ok(DividendMap { d, sigma: table.sigma(), store: DividendStore::Sparse(map) })
}

/// `|f(x) - (f_∅(x) + sum_{S≠∅} H(S))|`; requires a full table.
pub fn mobius_identity_check(table: &CoalitionValueTable, dividends: &DividendMap) -> Result<f64> {
    if !table.is_full() {
        return Err(Error::MissingCoalition(format!("reconstruction needs all {} coalitions", 1u128 << table.dim())));
    }
    let full = CoalitionKey::full(table.dim());
    let mut total = 0.0;
    for s in full.subsets() {
        total += dividends.value(s)?;
    }
    Ok((table.full_value() - total).abs())
}
