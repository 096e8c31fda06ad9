//! Masked outputs `f_S(x)`: the expected model output when the features in
//! `S` are pinned to the instance and the rest are drawn from a background
//! sample (marginal / interventional splice).

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{check_finite, evaluate_rows, FeatureVector, ModelSpec};

/// Widest instance a coalition bitmask can address.
pub const MAX_FEATURES: usize = 64;
/// Widest instance for exhaustive enumeration (`2^20 * B` model calls).
pub const MAX_FULL_FEATURES: usize = 20;
/// Cap on stored coalitions for capped enumeration.
pub const MAX_CAPPED_KEYS: usize = 1 << 22;
pub const DEFAULT_BACKGROUND_SIZE: usize = 32;

/// Label recorded in reports for the estimator used here.
pub const MASKING_ESTIMATOR: &str = "marginal-splice";

/// Spliced rows per model batch.
const ROWS_PER_CHUNK: usize = 4096;

/// A feature coalition as a bitmask; bit `i` set means feature `i` is present.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct CoalitionKey(pub u64);

impl CoalitionKey {
    pub const EMPTY: CoalitionKey = CoalitionKey(0);

    pub fn full(d: usize) -> Self {
        debug_assert!(d <= MAX_FEATURES);
        if d == 64 {
            CoalitionKey(u64::MAX)
        } else {
            CoalitionKey((1u64 << d) - 1)
        }
    }

    pub fn singleton(i: usize) -> Self {
        CoalitionKey(1 << i)
    }

    pub fn from_members(members: impl IntoIterator<Item = usize>) -> Self {
        CoalitionKey(members.into_iter().fold(0, |m, i| m | (1u64 << i)))
    }

    #[inline]
    pub fn bits(self) -> u64 {
        self.0
    }

    #[inline]
    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    #[inline]
    pub fn contains(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    #[inline]
    pub fn with(self, i: usize) -> Self {
        CoalitionKey(self.0 | 1 << i)
    }

    #[inline]
    pub fn without(self, i: usize) -> Self {
        CoalitionKey(self.0 & !(1 << i))
    }

    #[inline]
    pub fn is_subset_of(self, other: CoalitionKey) -> bool {
        self.0 & !other.0 == 0
    }

    /// Member indices in ascending order.
    pub fn members(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i)
            }
        })
    }

    /// Every subset of `self`, including `self` and the empty set.
    pub fn subsets(self) -> impl Iterator<Item = CoalitionKey> {
        let full = self.0;
        let mut next = Some(full);
        std::iter::from_fn(move || {
            let cur = next?;
            next = if cur == 0 { None } else { Some((cur - 1) & full) };
            Some(CoalitionKey(cur))
        })
    }

    /// `0b...` with exactly `d` binary digits (feature 0 is the last digit).
    pub fn to_bit_string(self, d: usize) -> String {
        format!("{:#0width$b}", self.0, width = d + 2)
    }

    pub fn parse_bit_string(s: &str) -> Result<Self> {
        let digits = s.strip_prefix("0b").ok_or_else(|| Error::Parse(format!("coalition `{s}` lacks 0b prefix")))?;
        u64::from_str_radix(digits, 2).map(CoalitionKey).map_err(|e| Error::Parse(format!("coalition `{s}`: {e}")))
    }
}

impl Ord for CoalitionKey {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.len(), self.0).cmp(&(other.len(), other.0))
    }
}

impl PartialOrd for CoalitionKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for CoalitionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, i) in self.members().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{i}")?;
        }
        f.write_str("}")
    }
}

impl fmt::Display for CoalitionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// How much of the coalition lattice a table enumerates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sigma {
    Full,
    Capped(usize),
}

impl Sigma {
    /// The effective cardinality cap for `d` features.
    pub fn cap(self, d: usize) -> usize {
        match self {
            Sigma::Full => d,
            Sigma::Capped(s) => s.min(d),
        }
    }
}

impl fmt::Display for Sigma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sigma::Full => f.write_str("full"),
            Sigma::Capped(s) => write!(f, "{s}"),
        }
    }
}

impl std::str::FromStr for Sigma {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("full") {
            return Ok(Sigma::Full);
        }
        s.parse::<usize>()
            .map(Sigma::Capped)
            .map_err(|_| Error::Config(format!("sigma must be `full` or a positive integer, got `{s}`")))
    }
}

impl Serialize for Sigma {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Sigma::Full => s.serialize_str("full"),
            Sigma::Capped(k) => s.serialize_u64(*k as u64),
        }
    }
}

/// Reference rows used to marginalize absent features.
#[derive(Clone, Debug, PartialEq)]
pub struct BackgroundSet {
    rows: Vec<Vec<f64>>,
    source: String,
}

impl BackgroundSet {
    pub fn new(rows: Vec<Vec<f64>>, source: impl Into<String>) -> Result<Self> {
        let first = rows.first().ok_or_else(|| Error::Dimension("background set is empty".into()))?;
        let d = first.len();
        if d == 0 {
            return Err(Error::Dimension("background rows have no features".into()));
        }
        for (r, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::Dimension(format!("background row {r} has {} features, expected {d}", row.len())));
            }
            check_finite(row).map_err(|e| Error::NonFiniteInput(format!("background row {r}: {e}")))?;
        }
        Ok(Self { rows, source: source.into() })
    }

    pub fn single(row: Vec<f64>) -> Result<Self> {
        Self::new(vec![row], "baseline")
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows[0].len()
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Column means.
    pub fn mean_row(&self) -> Vec<f64> {
        let n = self.rows.len() as f64;
        let mut acc = vec![0.0; self.dim()];
        for row in &self.rows {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    /// Deterministic subsample of `size` rows without replacement, kept in
    /// their original order. Returns a clone when `size >= len`.
    pub fn subsample(&self, size: usize, seed: u64) -> Result<Self> {
        if size == 0 {
            return Err(Error::Config("background size must be at least 1".into()));
        }
        if size >= self.rows.len() {
            return Ok(self.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = sample(&mut rng, self.rows.len(), size).into_vec();
        picked.sort_unstable();
        Ok(Self {
            rows: picked.into_iter().map(|i| self.rows[i].clone()).collect(),
            source: format!("{} (subsample {size}, seed {seed})", self.source),
        })
    }

    /// Loads numeric rows from a headed CSV; `skip` names columns to drop.
    pub fn from_csv(path: impl AsRef<Path>, skip: &[&str]) -> Result<Self> {
        let path = path.as_ref();
        let table = crate::data::read_csv(path, skip)?;
        Self::new(table.rows, path.display().to_string())
    }
}

/// Replaces the entries outside `coalition` with the background row's.
fn splice_into(out: &mut Vec<f64>, x: &[f64], background: &[f64], coalition: CoalitionKey) {
    out.clear();
    out.extend(x.iter().zip(background).enumerate().map(|(i, (xv, bv))| if coalition.contains(i) { *xv } else { *bv }));
}

fn check_instance(model: &ModelSpec, x: &FeatureVector, bg: &BackgroundSet) -> Result<usize> {
    let d = x.len();
    if d != model.input_dim() {
        return Err(Error::Dimension(format!("instance has {d} features, model expects {}", model.input_dim())));
    }
    if bg.dim() != d {
        return Err(Error::Dimension(format!("background has {} features, instance has {d}", bg.dim())));
    }
    if d > MAX_FEATURES {
        return Err(Error::EnumerationGuard(format!("{d} features exceeds the {MAX_FEATURES}-feature bitmask limit")));
    }
    Ok(d)
}

/// Estimates `f_S(x)` for each coalition, batching spliced rows through
/// the model. Each value is a sequential mean, so the result does not
/// depend on how work is scheduled.
fn masked_outputs(model: &ModelSpec, x: &[f64], bg: &BackgroundSet, keys: &[CoalitionKey]) -> Result<Vec<f64>> {
    let d = x.len();
    let full = CoalitionKey::full(d);
    let b = bg.len();
    let per_chunk = (ROWS_PER_CHUNK / b).max(1);

    let eval_chunk = |chunk: &[CoalitionKey]| -> Result<Vec<f64>> {
        let mut storage: Vec<Vec<f64>> = Vec::with_capacity(chunk.len() * b);
        for &key in chunk {
            if key == full {
                storage.push(x.to_vec());
                continue;
            }
            for row in bg.rows() {
                let mut out = Vec::with_capacity(d);
                splice_into(&mut out, x, row, key);
                storage.push(out);
            }
        }
        let rows: Vec<&[f64]> = storage.iter().map(Vec::as_slice).collect();
        let outputs = evaluate_rows(model, &rows)?;
        let mut cursor = 0;
        Ok(chunk
            .iter()
            .map(|&key| {
                if key == full {
                    cursor += 1;
                    // The splice is the identity: f_G(x) = f(x) exactly.
                    outputs[cursor - 1]
                } else {
                    let sum: f64 = outputs[cursor..cursor + b].iter().sum();
                    cursor += b;
                    sum / b as f64
                }
            })
            .collect())
    };

    let chunks: Vec<Result<Vec<f64>>> = if model.is_external() {
        keys.chunks(per_chunk).map(eval_chunk).collect()
    } else {
        keys.par_chunks(per_chunk).map(eval_chunk).collect()
    };
    let mut values = Vec::with_capacity(keys.len());
    for c in chunks {
        values.extend(c?);
    }
    Ok(values)
}

/// `(1/B) * sum_b f(splice(x, b, S))`; exactly `f(x)` when `S` is everything.
pub fn masked_output(model: &ModelSpec, x: &FeatureVector, coalition: CoalitionKey, bg: &BackgroundSet) -> Result<f64> {
    let d = check_instance(model, x, bg)?;
    if !coalition.is_subset_of(CoalitionKey::full(d)) {
        return Err(Error::Dimension(format!("coalition {coalition} references features beyond {d}")));
    }
    Ok(masked_outputs(model, x.values(), bg, &[coalition])?[0])
}

#[derive(Clone, Debug, PartialEq)]
enum Store {
    /// Indexed by mask; holds all `2^d` coalitions.
    Dense(Vec<f64>),
    Sparse(BTreeMap<CoalitionKey, f64>),
}

/// Masked outputs for one instance, immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct CoalitionValueTable {
    instance: FeatureVector,
    d: usize,
    sigma: Sigma,
    store: Store,
}

impl CoalitionValueTable {
    /// Builds a table directly from coalition values (all `2^d` of them, in
    /// mask order). Mainly for tests and synthetic games.
    pub fn from_dense(instance: FeatureVector, values: Vec<f64>) -> Result<Self> {
        let d = instance.len();
        if d > MAX_FULL_FEATURES {
            return Err(Error::EnumerationGuard(format!("{d} features exceeds full-enumeration limit")));
        }
        if values.len() != 1 << d {
            return Err(Error::Dimension(format!("expected {} coalition values, got {}", 1usize << d, values.len())));
        }
        check_finite(&values)?;
        Ok(Self { instance, d, sigma: Sigma::Full, store: Store::Dense(values) })
    }

    pub fn instance(&self) -> &FeatureVector {
        &self.instance
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn sigma(&self) -> Sigma {
        self.sigma
    }

    /// Whether every one of the `2^d` coalitions is present.
    pub fn is_full(&self) -> bool {
        match &self.store {
            Store::Dense(_) => true,
            Store::Sparse(m) => self.d < 64 && m.len() == 1usize << self.d,
        }
    }

    pub fn get(&self, key: CoalitionKey) -> Option<f64> {
        match &self.store {
            Store::Dense(v) => v.get(key.0 as usize).copied(),
            Store::Sparse(m) => m.get(&key).copied(),
        }
    }

    pub fn value(&self, key: CoalitionKey) -> Result<f64> {
        self.get(key).ok_or_else(|| Error::MissingCoalition(key.to_bit_string(self.d)))
    }

    pub fn contains(&self, key: CoalitionKey) -> bool {
        self.get(key).is_some()
    }

    pub fn full_value(&self) -> f64 {
        self.get(CoalitionKey::full(self.d)).expect("table always holds G")
    }

    pub fn empty_value(&self) -> f64 {
        self.get(CoalitionKey::EMPTY).expect("table always holds the empty coalition")
    }

    pub fn len(&self) -> usize {
        match &self.store {
            Store::Dense(v) => v.len(),
            Store::Sparse(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Entries in canonical `(popcount, mask)` order.
    pub fn entries(&self) -> Vec<(CoalitionKey, f64)> {
        match &self.store {
            Store::Dense(v) => {
                let mut e: Vec<_> = v.iter().enumerate().map(|(m, val)| (CoalitionKey(m as u64), *val)).collect();
                e.sort_by_key(|(k, _)| *k);
                e
            }
            Store::Sparse(m) => m.iter().map(|(k, v)| (*k, *v)).collect(),
        }
    }

    /// Dense values indexed by mask, when the table is full.
    pub fn dense_values(&self) -> Option<std::borrow::Cow<'_, [f64]>> {
        match &self.store {
            Store::Dense(v) => Some(std::borrow::Cow::Borrowed(v)),
            Store::Sparse(m) if self.is_full() => {
                let mut v = vec![0.0; 1 << self.d];
                for (k, val) in m {
                    v[k.0 as usize] = *val;
                }
                Some(std::borrow::Cow::Owned(v))
            }
            Store::Sparse(_) => None,
        }
    }

    /// A new table that additionally holds `keys`, evaluated on demand.
    /// Full tables are returned unchanged.
    pub fn extended(
        &self,
        model: &ModelSpec,
        bg: &BackgroundSet,
        keys: impl IntoIterator<Item = CoalitionKey>,
    ) -> Result<Self> {
        let Store::Sparse(map) = &self.store else {
            return Ok(self.clone());
        };
        let full = CoalitionKey::full(self.d);
        let mut missing: Vec<CoalitionKey> =
            keys.into_iter().filter(|k| k.is_subset_of(full) && !map.contains_key(k)).collect();
        if missing.is_empty() {
            return Ok(self.clone());
        }
        missing.sort();
        missing.dedup();
        check_instance(model, &self.instance, bg)?;
        let values = masked_outputs(model, self.instance.values(), bg, &missing)?;
        let mut map = map.clone();
        map.extend(missing.into_iter().zip(values));
        Ok(Self { store: Store::Sparse(map), ..self.clone() })
    }

    /// `[{"coalition":"0b1010","value":v}, ...]` in canonical order.
    pub fn to_dump_json(&self) -> serde_json::Value {
        dump_json(self.d, self.entries())
    }
}

pub(crate) fn dump_json(d: usize, entries: Vec<(CoalitionKey, f64)>) -> serde_json::Value {
    #[derive(Serialize)]
    struct Entry {
        coalition: String,
        value: f64,
    }
    serde_json::to_value(
        entries.into_iter().map(|(k, value)| Entry { coalition: k.to_bit_string(d), value }).collect::<Vec<_>>(),
    )
    .expect("dump serializes")
}

/// Parses a table dump back into `(key, value)` pairs.
pub fn parse_dump(value: &serde_json::Value) -> Result<Vec<(CoalitionKey, f64)>> {
    #[derive(Deserialize)]
    struct Entry {
        coalition: String,
        value: f64,
    }
    let entries: Vec<Entry> = serde_json::from_value(value.clone())?;
    entries.into_iter().map(|e| Ok((CoalitionKey::parse_bit_string(&e.coalition)?, e.value))).collect()
}

/// All coalitions of at most `cap` members out of `d`, in canonical order.
pub fn coalitions_up_to(d: usize, cap: usize) -> Vec<CoalitionKey> {
    let mut out = vec![CoalitionKey::EMPTY];
    let mut layer = vec![CoalitionKey::EMPTY];
    for _ in 0..cap.min(d) {
        let mut next = Vec::new();
        for key in &layer {
            let start = if key.is_empty() { 0 } else { 64 - key.0.leading_zeros() as usize };
            for i in start..d {
                next.push(key.with(i));
            }
        }
        next.sort();
        out.extend_from_slice(&next);
        layer = next;
    }
    out
}

/// The key set `build_table` stores for `sigma`.
pub fn table_keys(d: usize, sigma: Sigma) -> Result<Vec<CoalitionKey>> {
    if d == 0 || d > MAX_FEATURES {
        return Err(Error::EnumerationGuard(format!("{d} features is outside 1..={MAX_FEATURES}")));
    }
    match sigma {
        Sigma::Full => {
            if d > MAX_FULL_FEATURES {
                return Err(Error::EnumerationGuard(format!(
                    "full enumeration of {d} features exceeds the {MAX_FULL_FEATURES}-feature limit"
                )));
            }
            Ok((0..1u64 << d).map(CoalitionKey).collect())
        }
        Sigma::Capped(s) => {
            if s == 0 || s > d {
                return Err(Error::Config(format!("sigma must be in 1..={d}, got {s}")));
            }
            let estimate: f64 = (0..=s).map(|k| binomial(d, k)).sum();
            if estimate > MAX_CAPPED_KEYS as f64 {
                return Err(Error::EnumerationGuard(format!(
                    "sigma {s} over {d} features needs ~{estimate:.0} coalitions"
                )));
            }
            let full = CoalitionKey::full(d);
            let mut keys = coalitions_up_to(d, s);
            keys.extend((0..d).map(|i| full.without(i)));
            keys.push(full);
            keys.sort();
            keys.dedup();
            Ok(keys)
        }
    }
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Evaluates every coalition `sigma` calls for. Capped tables hold all
/// coalitions with at most `sigma` members plus `G` and every `G \ {i}`.
pub fn build_table(
    model: &ModelSpec,
    x: &FeatureVector,
    bg: &BackgroundSet,
    sigma: Sigma,
) -> Result<CoalitionValueTable> {
    let d = check_instance(model, x, bg)?;
    let keys = table_keys(d, sigma)?;
    let values = masked_outputs(model, x.values(), bg, &keys)?;
    let store = match sigma {
        Sigma::Full => {
            // keys are 0..2^d in order
            Store::Dense(values)
        }
        Sigma::Capped(_) => Store::Sparse(keys.into_iter().zip(values).collect()),
    };
    Ok(CoalitionValueTable { instance: x.clone(), d, sigma, store })
}
