//! Exact Taylor terms of polynomial models, used as a ground-truth oracle
//! for how each method distributes independent and interaction effects.
//!
//! A polynomial is rewritten in the shifted basis `prod_i (x_i - β_i)^{k_i}`.
//! Terms touching one feature are independent effects; terms touching two
//! or more are interaction effects of that support.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::attribution::{Attribution, Method, WeightFamily};
use crate::error::{Error, Result};
use crate::masking::{binomial, BackgroundSet, CoalitionKey};
use crate::oracle::{FeatureVector, ModelSpec};

/// Tolerance for every postulate check.
pub const POSTULATE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaylorTerm {
    /// Feature index -> positive power.
    pub exponents: BTreeMap<usize, u32>,
    /// `c * prod_i (x_i - β_i)^{k_i}`.
    pub value: f64,
}

impl TaylorTerm {
    pub fn support(&self) -> CoalitionKey {
        CoalitionKey::from_members(self.exponents.keys().copied())
    }

    pub fn is_independent(&self) -> bool {
        self.exponents.len() == 1
    }

    pub fn is_interaction(&self) -> bool {
        self.exponents.len() >= 2
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaylorExpansion {
    /// `f(β)`.
    pub base_value: f64,
    pub terms: Vec<TaylorTerm>,
}

impl TaylorExpansion {
    /// `f(β) + sum of all term values`, which equals `f(x)`.
    pub fn total(&self) -> f64 {
        self.base_value + self.terms.iter().map(|t| t.value).sum::<f64>()
    }
}

/// Expands `model` around `beta` and evaluates every term at `x`.
pub fn taylor_terms(model: &ModelSpec, x: &FeatureVector, beta: &FeatureVector) -> Result<TaylorExpansion> {
    let poly = model.as_polynomial().ok_or(Error::NotPolynomial)?;
    let d = poly.input_dim;
    if x.len() != d || beta.len() != d {
        return Err(Error::Dimension(format!(
            "expansion of a {d}-feature polynomial at x ({}) and beta ({})",
            x.len(),
            beta.len()
        )));
    }
    let (x, beta) = (x.values(), beta.values());

    // Shifted-basis coefficients keyed by their exponent list.
    let mut coeffs: BTreeMap<Vec<(usize, u32)>, f64> = BTreeMap::new();
    for mono in &poly.monomials {
        // x_i^k = sum_j C(k,j) β_i^{k-j} (x_i-β_i)^j, multiplied across features.
        let mut partial: Vec<(Vec<(usize, u32)>, f64)> = vec![(Vec::new(), mono.coef)];
        for (&var, &power) in &mono.exps {
            let mut next = Vec::with_capacity(partial.len() * (power as usize + 1));
            for (exps, c) in &partial {
                for j in 0..=power {
                    let factor = binomial(power as usize, j as usize) * beta[var].powi((power - j) as i32);
                    if factor == 0.0 {
                        continue;
                    }
                    let mut e = exps.clone();
                    if j > 0 {
                        e.push((var, j));
                    }
                    next.push((e, c * factor));
                }
            }
            partial = next;
        }
        for (exps, c) in partial {
            *coeffs.entry(exps).or_insert(0.0) += c;
        }
    }

    let base_value = coeffs.remove(&Vec::new()).unwrap_or(0.0);
    let terms = coeffs
        .into_iter()
        .filter(|(_, c)| *c != 0.0)
        .map(|(exps, c)| {
            let value = exps.iter().fold(c, |acc, &(i, k)| acc * (x[i] - beta[i]).powi(k as i32));
            TaylorTerm { exponents: exps.into_iter().collect(), value }
        })
        .collect();
    Ok(TaylorExpansion { base_value, terms })
}

/// Sum of independent-effect terms of feature `i`.
pub fn independent_sum(terms: &[TaylorTerm], i: usize) -> f64 {
    terms.iter().filter(|t| t.is_independent() && t.exponents.contains_key(&i)).map(|t| t.value).sum()
}

/// Sum of interaction terms whose support is exactly `coalition`.
pub fn interaction_sum(terms: &[TaylorTerm], coalition: CoalitionKey) -> f64 {
    terms.iter().filter(|t| t.is_interaction() && t.support() == coalition).map(|t| t.value).sum()
}

/// Interaction sums grouped by support.
pub fn interaction_sums(terms: &[TaylorTerm]) -> BTreeMap<CoalitionKey, f64> {
    let mut out = BTreeMap::new();
    for t in terms.iter().filter(|t| t.is_interaction()) {
        *out.entry(t.support()).or_insert(0.0) += t.value;
    }
    out
}

/// How a method distributes Taylor terms: `a_i = sum_j τ_{ij} λ_j +
/// sum_S ζ_{i,S} μ_S`, with one `ζ` shared by every term of support `S`.
#[derive(Clone, Debug, PartialEq)]
pub struct GenericAllocation {
    /// `d x d`.
    pub tau: Vec<Vec<f64>>,
    /// Coalition -> weight for each of the `d` features (members or not).
    pub zeta: BTreeMap<CoalitionKey, Vec<f64>>,
}

impl GenericAllocation {
    fn with_zeta(d: usize, tau_diag: f64, share: impl Fn(CoalitionKey, usize) -> f64) -> Self {
        let tau = (0..d).map(|i| (0..d).map(|j| if i == j { tau_diag } else { 0.0 }).collect()).collect();
        let zeta = (0u64..1 << d)
            .map(CoalitionKey)
            .filter(|k| k.len() > 1)
            .map(|k| (k, (0..d).map(|i| if k.contains(i) { share(k, i) } else { 0.0 }).collect()))
            .collect();
        Self { tau, zeta }
    }

    /// Occlusion: every member takes the whole interaction.
    pub fn occlusion(d: usize) -> Self {
        Self::with_zeta(d, 1.0, |_, _| 1.0)
    }

    /// Shapley: equal split.
    pub fn shapley(d: usize) -> Self {
        Self::with_zeta(d, 1.0, |k, _| 1.0 / k.len() as f64)
    }

    /// Semivalue with per-coalition size weights `w`:
    /// `τ_ii = sum_{S ⊆ G\{i}} w_{|S|}` and
    /// `ζ_{i,T} = sum_{S ⊆ G\{i}, T\{i} ⊆ S} w_{|S|}`.
    pub fn semivalue(family: &WeightFamily) -> Self {
        let d = family.weights.len();
        let w = &family.weights;
        let tau_diag = family.independent_mass();
        Self::with_zeta(d, tau_diag, |k, _| {
            let t = k.len();
            (t - 1..d).map(|s| binomial(d - t, s + 1 - t) * w[s]).sum()
        })
    }

    /// TaylorPODA under the given allocation.
    pub fn taylorpoda(xi: &crate::allocation::XiAllocation) -> Self {
        Self::with_zeta(xi.dim(), 1.0, |k, i| xi.weight(k, i).unwrap_or(f64::NAN))
    }

    fn dim(&self) -> usize {
        self.tau.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PostulateReport {
    pub precision: bool,
    pub federation: bool,
    pub zero_discrepancy: bool,
}

impl PostulateReport {
    pub fn all(&self) -> bool {
        self.precision && self.federation && self.zero_discrepancy
    }

    pub fn and(self, other: PostulateReport) -> PostulateReport {
        PostulateReport {
            precision: self.precision && other.precision,
            federation: self.federation && other.federation,
            zero_discrepancy: self.zero_discrepancy && other.zero_discrepancy,
        }
    }
}

/// Checks an attribution of a polynomial model against its declared
/// allocation and the analytic Taylor terms.
///
/// * precision: `τ` is the identity and `a_i - sum_S ζ_{i,S} μ_S` equals
///   feature `i`'s independent effect.
/// * federation: no interaction weight leaks outside its coalition and
///   `(τ, ζ)` reproduce the scores.
/// * zero-discrepancy: `f(β) + sum_i a_i = f(x)`.
///
/// The background must be the single expansion point `β`.
pub fn check_postulates(
    attribution: &Attribution,
    allocation: &GenericAllocation,
    model: &ModelSpec,
    x: &FeatureVector,
    bg: &BackgroundSet,
) -> Result<PostulateReport> {
    if attribution.method == Method::Lime {
        return Err(Error::Config("LIME is a surrogate and has no Taylor allocation".into()));
    }
    if bg.len() != 1 {
        return Err(Error::BackgroundNotSingleRow(bg.len()));
    }
    let beta = FeatureVector::new(bg.rows()[0].clone())?;
    let expansion = taylor_terms(model, x, &beta)?;
    let d = x.len();
    if attribution.scores.len() != d || allocation.dim() != d {
        return Err(Error::Dimension(format!(
            "{} scores and a {}-feature allocation for {d} features",
            attribution.scores.len(),
            allocation.dim()
        )));
    }
    let lambda: Vec<f64> = (0..d).map(|i| independent_sum(&expansion.terms, i)).collect();
    let mu = interaction_sums(&expansion.terms);
    let close = |a: f64, b: f64| (a - b).abs() <= POSTULATE_TOL;

    let allocated_interaction =
        |i: usize| -> f64 { mu.iter().map(|(k, m)| allocation.zeta.get(k).map_or(0.0, |z| z[i]) * m).sum() };

    let tau_is_identity = (0..d).all(|i| (0..d).all(|j| allocation.tau[i][j] == if i == j { 1.0 } else { 0.0 }));
    let precision =
        tau_is_identity && (0..d).all(|i| close(attribution.scores[i] - allocated_interaction(i), lambda[i]));

    let no_leak = allocation.zeta.iter().all(|(k, z)| (0..d).all(|i| k.contains(i) || z[i] == 0.0));
    let reconstructs = (0..d).all(|i| {
        let independent: f64 = (0..d).map(|j| allocation.tau[i][j] * lambda[j]).sum();
        close(independent + allocated_interaction(i), attribution.scores[i])
    });
    let federation = no_leak && reconstructs;

    let fx = expansion.total();
    let zero_discrepancy = close(expansion.base_value + attribution.scores.iter().sum::<f64>(), fx);

    Ok(PostulateReport { precision, federation, zero_discrepancy })
}
