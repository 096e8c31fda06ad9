//! Interaction-share allocations `ξ` and the random search that picks one.
//!
//! For every coalition `S` with `|S| > 1`, `ξ_S` is a point on the simplex
//! over the members of `S`: feature `i` receives `ξ_{i,S} H(S)` of that
//! coalition's dividend. Candidates are drawn from a Dirichlet distribution
//! and the one with the smallest AUP wins.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde_json::json;

use crate::attribution::{taylorpoda, taylorpoda_capped, Attribution};
use crate::error::{Error, Result};
use crate::masking::{coalitions_up_to, BackgroundSet, CoalitionKey, CoalitionValueTable};
use crate::metrics::{aup_scores, required_keys};
use crate::oracle::ModelSpec;

pub const DEFAULT_CANDIDATES: usize = 16;
pub const DEFAULT_ALPHA: f64 = 1.0;
const SIMPLEX_TOL: f64 = 1e-12;

/// Position of feature `i` within the ascending members of `key`.
#[inline]
pub(crate) fn slot(key: CoalitionKey, i: usize) -> usize {
    (key.bits() & ((1u64 << i) - 1)).count_ones() as usize
}

/// Per-coalition simplex weights, keyed by coalitions with `|S| > 1`.
/// Each vector lists weights for the members of `S` in ascending order.
#[derive(Clone, Debug, PartialEq)]
pub struct XiAllocation {
    d: usize,
    entries: BTreeMap<CoalitionKey, Vec<f64>>,
}

impl XiAllocation {
    /// Validated allocation.
    pub fn new(d: usize, entries: BTreeMap<CoalitionKey, Vec<f64>>) -> Result<Self> {
        let xi = Self { d, entries };
        xi.validate()?;
        Ok(xi)
    }

    /// Allocation without simplex validation, for diagnostic reductions
    /// such as "every member takes the whole dividend".
    pub fn new_unchecked(d: usize, entries: BTreeMap<CoalitionKey, Vec<f64>>) -> Self {
        Self { d, entries }
    }

    /// `ξ_{i,S} = 1/|S|` for every coalition of 2..=`cap` members.
    pub fn uniform(d: usize, cap: usize) -> Self {
        let entries = interaction_keys(d, cap).into_iter().map(|k| (k, vec![1.0 / k.len() as f64; k.len()])).collect();
        Self { d, entries }
    }

    /// The same weight for every member of every coalition (not a simplex
    /// unless `value = 1/|S|`).
    pub fn constant(d: usize, cap: usize, value: f64) -> Self {
        let entries = interaction_keys(d, cap).into_iter().map(|k| (k, vec![value; k.len()])).collect();
        Self { d, entries }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: CoalitionKey) -> Option<&[f64]> {
        self.entries.get(&key).map(Vec::as_slice)
    }

    /// `ξ_{i,S}`, or `None` when `S` is not covered or `i ∉ S`.
    pub fn weight(&self, key: CoalitionKey, i: usize) -> Option<f64> {
        if !key.contains(i) {
            return None;
        }
        self.entries.get(&key).map(|w| w[slot(key, i)])
    }

    pub fn entries(&self) -> impl Iterator<Item = (CoalitionKey, &[f64])> {
        self.entries.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    /// Replaces one coalition's weights, re-validating that entry.
    pub fn with_entry(mut self, key: CoalitionKey, weights: Vec<f64>) -> Result<Self> {
        check_entry(key, &weights)?;
        self.entries.insert(key, weights);
        Ok(self)
    }

    /// Every coalition of 2..=`cap` members over `d` features is present.
    pub fn covers(&self, cap: usize) -> Result<()> {
        for key in interaction_keys(self.d, cap) {
            if !self.entries.contains_key(&key) {
                return Err(Error::InvalidAllocation(format!("no weights for coalition {key}")));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let full = CoalitionKey::full(self.d);
        for (key, w) in &self.entries {
            if !key.is_subset_of(full) {
                return Err(Error::InvalidAllocation(format!("coalition {key} exceeds {} features", self.d)));
            }
            check_entry(*key, w)?;
        }
        Ok(())
    }

    /// `{"0b011": [0.3, 0.7], ...}`.
    pub fn to_json(&self) -> serde_json::Value {
        let map: serde_json::Map<String, serde_json::Value> =
            self.entries.iter().map(|(k, w)| (k.to_bit_string(self.d), json!(w))).collect();
        serde_json::Value::Object(map)
    }
}

fn check_entry(key: CoalitionKey, w: &[f64]) -> Result<()> {
    if key.len() < 2 {
        return Err(Error::InvalidAllocation(format!("coalition {key} has fewer than two members")));
    }
    if w.len() != key.len() {
        return Err(Error::InvalidAllocation(format!(
            "coalition {key} has {} members but {} weights",
            key.len(),
            w.len()
        )));
    }
    if w.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidAllocation(format!("weights for {key} leave [0, 1]: {w:?}")));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidAllocation(format!("weights for {key} sum to {sum}")));
    }
    Ok(())
}

/// Coalitions with 2..=`cap` members, canonical order.
pub fn interaction_keys(d: usize, cap: usize) -> Vec<CoalitionKey> {
    coalitions_up_to(d, cap).into_iter().filter(|k| k.len() > 1).collect()
}

/// Concentration vector and generator seed.
#[derive(Clone, Debug, PartialEq)]
pub struct DirichletParams {
    pub alpha: Vec<f64>,
    pub seed: u64,
}

impl DirichletParams {
    pub fn symmetric(alpha: f64, seed: u64) -> Self {
        Self { alpha: vec![alpha], seed }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// One Dirichlet draw of length `k`: independent `Gamma(α_i, 1)` variates,
/// normalized. A single-element `alpha` is broadcast.
pub fn sample_simplex<R: Rng + ?Sized>(alpha: &[f64], k: usize, rng: &mut R) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::InvalidAlpha(format!("simplex dimension must be at least 2, got {k}")));
    }
    if alpha.len() != 1 && alpha.len() != k {
        return Err(Error::InvalidAlpha(format!("{} concentrations for dimension {k}", alpha.len())));
    }
    let gammas = (0..k)
        .map(|i| {
            let a = if alpha.len() == 1 { alpha[0] } else { alpha[i] };
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::InvalidAlpha(format!("concentration {a} is not positive")));
            }
            Gamma::new(a, 1.0).map_err(|e| Error::InvalidAlpha(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    loop {
        let draw: Vec<f64> = gammas.iter().map(|g| g.sample(rng)).collect();
        let sum: f64 = draw.iter().sum();
        // Underflow to an exact zero is possible for tiny α; redraw.
        if sum.is_finite() && sum > 0.0 && draw.iter().all(|&g| g > 0.0 && g < sum) {
            return Ok(draw.into_iter().map(|g| g / sum).collect());
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateConfig {
    pub n_candidates: usize,
    pub include_uniform: bool,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for CandidateConfig {
    fn default() -> Self {
        Self { n_candidates: DEFAULT_CANDIDATES, include_uniform: true, alpha: DEFAULT_ALPHA, seed: 0 }
    }
}

/// `n_candidates` allocations over coalitions of 2..=`cap` members. With
/// `include_uniform`, candidate 0 is the uniform split and the rest are
/// Dirichlet draws; otherwise all are draws.
pub fn generate_candidates(d: usize, cap: usize, config: &CandidateConfig) -> Result<Vec<XiAllocation>> {
    if config.n_candidates == 0 {
        return Err(Error::Config("need at least one candidate".into()));
    }
    let params = DirichletParams::symmetric(config.alpha, config.seed);
    let keys = interaction_keys(d, cap);
    let mut rng = params.rng();
    let mut out = Vec::with_capacity(config.n_candidates);
    if config.include_uniform {
        out.push(XiAllocation::uniform(d, cap));
    }
    while out.len() < config.n_candidates {
        let mut entries = BTreeMap::new();
        for &key in &keys {
            entries.insert(key, sample_simplex(&params.alpha, key.len(), &mut rng)?);
        }
        out.push(XiAllocation { d, entries });
    }
    Ok(out)
}

/// Picks the lowest-AUP attribution; ties go to the earliest candidate.
fn select(attrs: Vec<Attribution>, table: &CoalitionValueTable) -> Result<(usize, Attribution)> {
    let aups = attrs.par_iter().map(|a| aup_scores(&a.scores, table)).collect::<Result<Vec<f64>>>()?;
    let best = aups.iter().enumerate().fold(0, |best, (i, v)| if *v < aups[best] { i } else { best });
    let mut chosen = attrs.into_iter().nth(best).expect("non-empty candidate list");
    chosen.aup = aups[best];
    chosen.metadata.insert("candidate_index".into(), json!(best));
    chosen.metadata.insert("candidate_aups".into(), json!(aups));
    Ok((best, chosen))
}

/// Evaluates the full attribution under every candidate and keeps the one
/// with the least AUP.
pub fn optimize_xi(table: &CoalitionValueTable, candidates: &[XiAllocation]) -> Result<(XiAllocation, Attribution)> {
    if candidates.is_empty() {
        return Err(Error::Config("need at least one candidate".into()));
    }
    let attrs = candidates.par_iter().map(|c| taylorpoda(table, c)).collect::<Result<Vec<_>>>()?;
    let (best, attr) = select(attrs, table)?;
    Ok((candidates[best].clone(), attr))
}

/// Capped counterpart of [`optimize_xi`]. Top-`m` coalitions outside the
/// capped table are evaluated on demand; the extended table is returned.
pub fn optimize_xi_capped(
    table: &CoalitionValueTable,
    candidates: &[XiAllocation],
    sigma: usize,
    model: &ModelSpec,
    bg: &BackgroundSet,
) -> Result<(XiAllocation, Attribution, CoalitionValueTable)> {
    if candidates.is_empty() {
        return Err(Error::Config("need at least one candidate".into()));
    }
    let attrs = candidates.par_iter().map(|c| taylorpoda_capped(table, c, sigma)).collect::<Result<Vec<_>>>()?;
    let needed: Vec<CoalitionKey> = attrs.iter().flat_map(|a| required_keys(&a.scores)).collect();
    let extended = table.extended(model, bg, needed)?;
    let (best, attr) = select(attrs, &extended)?;
    Ok((candidates[best].clone(), attr, extended))
}
