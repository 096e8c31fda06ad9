//! Per-feature attribution methods over a shared coalition-value table.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::allocation::{slot, XiAllocation};
use crate::dividends::{harsanyi_all, DividendMap};
use crate::error::{Error, Result};
use crate::masking::{binomial, BackgroundSet, CoalitionKey, CoalitionValueTable, MAX_FULL_FEATURES};
use crate::metrics::{aup_scores, discrepancy_scores};
use crate::oracle::{evaluate_rows, FeatureVector, ModelSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Occ1,
    Shap,
    WeightedShap,
    TaylorPoda,
    /// Cardinality-capped TaylorPODA.
    TaylorPodaC,
    Lime,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Occ1, Method::Shap, Method::WeightedShap, Method::TaylorPoda, Method::Lime];

    pub fn id(self) -> &'static str {
        match self {
            Method::Occ1 => "occ1",
            Method::Shap => "shap",
            Method::WeightedShap => "weightedshap",
            Method::TaylorPoda => "taylorpoda",
            Method::TaylorPodaC => "taylorpodac",
            Method::Lime => "lime",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Occ1 => "OCC-1",
            Method::Shap => "SHAP",
            Method::WeightedShap => "WeightedSHAP",
            Method::TaylorPoda => "TaylorPODA",
            Method::TaylorPodaC => "TaylorPODA-c",
            Method::Lime => "LIME",
        }
    }

    /// Whether interaction shares are tunable. `None` for surrogate methods.
    pub fn adaptation(self) -> Option<bool> {
        match self {
            Method::Occ1 | Method::Shap => Some(false),
            Method::WeightedShap | Method::TaylorPoda | Method::TaylorPodaC => Some(true),
            Method::Lime => None,
        }
    }

    /// Whether scores plus the baseline always reconstruct `f(x)`.
    pub fn zero_discrepancy(self) -> bool {
        matches!(self, Method::Shap | Method::TaylorPoda)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "occ1" => Method::Occ1,
            "shap" => Method::Shap,
            "weightedshap" => Method::WeightedShap,
            "taylorpoda" => Method::TaylorPoda,
            "taylorpodac" => Method::TaylorPodaC,
            "lime" => Method::Lime,
            _ => return Err(Error::Config(format!("unknown method `{s}`"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub method: Method,
    pub scores: Vec<f64>,
    pub discrepancy: f64,
    /// NaN until scored against a table holding every top-`m` coalition.
    pub aup: f64,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl Attribution {
    /// Scores with discrepancy and (when the table allows) AUP filled in.
    pub fn from_scores(method: Method, scores: Vec<f64>, table: &CoalitionValueTable) -> Result<Self> {
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFiniteOutput(scores[i]));
        }
        let mut attr = Self { method, scores, discrepancy: 0.0, aup: f64::NAN, metadata: BTreeMap::new() };
        attr.discrepancy = discrepancy_scores(&attr.scores, table);
        attr.aup = match aup_scores(&attr.scores, table) {
            Ok(v) => v,
            Err(Error::MissingCoalition(_)) => f64::NAN,
            Err(e) => return Err(e),
        };
        Ok(attr)
    }

    /// Recomputes discrepancy and AUP against `table`.
    pub fn rescore(&mut self, table: &CoalitionValueTable) -> Result<()> {
        self.discrepancy = discrepancy_scores(&self.scores, table);
        self.aup = aup_scores(&self.scores, table)?;
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("attribution serializes")
    }
}

/// `a_i = f(x) - f_{G\{i}}(x)`.
pub fn occ1(table: &CoalitionValueTable) -> Result<Attribution> {
    let d = table.dim();
    let full = CoalitionKey::full(d);
    let fx = table.full_value();
    let scores = (0..d).map(|i| table.value(full.without(i)).map(|v| fx - v)).collect::<Result<Vec<_>>>()?;
    Attribution::from_scores(Method::Occ1, scores, table)
}

fn require_full<'a>(table: &'a CoalitionValueTable, what: &str) -> Result<std::borrow::Cow<'a, [f64]>> {
    table.dense_values().ok_or_else(|| {
        Error::MissingCoalition(format!("{what} needs every coalition; table is capped at sigma={}", table.sigma()))
    })
}

/// `sum_{S ⊆ G\{i}} w_{|S|} [f_{S∪{i}} - f_S]` for each feature.
fn semivalue_scores(values: &[f64], d: usize, size_weights: &[f64]) -> Vec<f64> {
    let n = values.len();
    (0..d)
        .map(|i| {
            let bit = 1usize << i;
            let mut acc = 0.0;
            for s in 0..n {
                if s & bit == 0 {
                    let w = size_weights[s.count_ones() as usize];
                    if w != 0.0 {
                        acc += w * (values[s | bit] - values[s]);
                    }
                }
            }
            acc
        })
        .collect()
}

/// Exact Shapley value with `p(S) = |S|!(d-1-|S|)!/d!`.
pub fn shap_exact(table: &CoalitionValueTable) -> Result<Attribution> {
    let values = require_full(table, "exact Shapley")?;
    let d = table.dim();
    let scores = semivalue_scores(&values, d, &WeightFamily::shapley(d).weights);
    Attribution::from_scores(Method::Shap, scores, table)
}

/// Per-coalition weights indexed by coalition size `0..d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightFamily {
    pub id: String,
    pub weights: Vec<f64>,
}

impl WeightFamily {
    pub fn new(id: impl Into<String>, weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config(format!("weights must be finite and non-negative: {weights:?}")));
        }
        Ok(Self { id: id.into(), weights })
    }

    /// Shapley weights `1 / (d * C(d-1, s))`; the only family that is efficient.
    pub fn shapley(d: usize) -> Self {
        Self { id: "shapley".into(), weights: (0..d).map(|s| 1.0 / (d as f64 * binomial(d - 1, s))).collect() }
    }

    /// All weight on coalitions of size `s`.
    pub fn point_mass(d: usize, s: usize) -> Self {
        let mut weights = vec![0.0; d];
        weights[s] = 1.0;
        Self { id: format!("size-{s}"), weights }
    }

    /// Weights proportional to the Beta(`p`, `q`) density at the midpoint
    /// of each size bin, `(s + 1/2) / d`, normalized to sum to 1 over sizes.
    pub fn beta(d: usize, p: f64, q: f64) -> Self {
        let raw: Vec<f64> = (0..d)
            .map(|s| {
                let t = (s as f64 + 0.5) / d as f64;
                t.powf(p - 1.0) * (1.0 - t).powf(q - 1.0)
            })
            .collect();
        let total: f64 = raw.iter().sum();
        Self { id: format!("beta({p},{q})"), weights: raw.into_iter().map(|w| w / total).collect() }
    }

    /// The 16 default families: Beta(p, q) for p, q in {0.5, 1, 2, 4}.
    pub fn beta_grid(d: usize) -> Vec<Self> {
        const GRID: [f64; 4] = [0.5, 1.0, 2.0, 4.0];
        GRID.iter().flat_map(|&p| GRID.iter().map(move |&q| Self::beta(d, p, q))).collect()
    }

    /// Total weight one feature's independent effect receives,
    /// `sum_{S ⊆ G\{i}} w_{|S|}`.
    pub fn independent_mass(&self) -> f64 {
        let d = self.weights.len();
        (0..d).map(|s| binomial(d - 1, s) * self.weights[s]).sum()
    }
}

/// The semivalue attribution for one weight family.
pub fn semivalue(table: &CoalitionValueTable, family: &WeightFamily) -> Result<Attribution> {
    let values = require_full(table, "semivalue")?;
    let d = table.dim();
    if family.weights.len() != d {
        return Err(Error::Dimension(format!(
            "family `{}` has {} size weights for {d} features",
            family.id,
            family.weights.len()
        )));
    }
    let scores = semivalue_scores(&values, d, &family.weights);
    let mut attr = Attribution::from_scores(Method::WeightedShap, scores, table)?;
    attr.metadata.insert("weight_family".into(), json!(family.id));
    Ok(attr)
}

/// Semivalue under each family; keeps the least-AUP one (ties to the first).
pub fn weighted_shap(table: &CoalitionValueTable, families: &[WeightFamily]) -> Result<Attribution> {
    if families.is_empty() {
        return Err(Error::EmptyFamilyList);
    }
    let attrs = families.iter().map(|f| semivalue(table, f)).collect::<Result<Vec<_>>>()?;
    let aups: Vec<f64> = attrs.iter().map(|a| a.aup).collect();
    let best = aups.iter().enumerate().fold(0, |best, (i, v)| if *v < aups[best] { i } else { best });
    let mut chosen = attrs.into_iter().nth(best).expect("non-empty");
    chosen.metadata.insert("family_index".into(), json!(best));
    chosen.metadata.insert(
        "family_aups".into(),
        json!(families.iter().zip(&aups).map(|(f, a)| json!({"id": f.id, "aup": a})).collect::<Vec<_>>()),
    );
    Ok(chosen)
}

/// `f(x) - f_{G\{i}} - sum_{S ∋ i, 1<|S|<=cap} (1 - ξ_{i,S}) H(S)`.
fn taylorpoda_scores(
    table: &CoalitionValueTable,
    dividends: &DividendMap,
    xi: &XiAllocation,
    cap: usize,
) -> Result<Vec<f64>> {
    let d = table.dim();
    let full = CoalitionKey::full(d);
    let fx = table.full_value();
    let mut scores = (0..d).map(|i| table.value(full.without(i)).map(|v| fx - v)).collect::<Result<Vec<_>>>()?;
    let mut missing = None;
    dividends.for_each_interaction(|key, h| {
        if key.len() > cap || missing.is_some() {
            return;
        }
        let Some(w) = xi.get(key) else {
            missing = Some(key);
            return;
        };
        for i in key.members() {
            scores[i] -= (1.0 - w[slot(key, i)]) * h;
        }
    });
    if let Some(key) = missing {
        return Err(Error::InvalidAllocation(format!("no weights for coalition {key}")));
    }
    Ok(scores)
}

fn check_xi(table: &CoalitionValueTable, xi: &XiAllocation, cap: usize) -> Result<()> {
    if xi.dim() != table.dim() {
        return Err(Error::Dimension(format!("allocation covers {} features, table has {}", xi.dim(), table.dim())));
    }
    xi.covers(cap)
}

/// TaylorPODA over a full table. `xi` must be a valid simplex allocation
/// for every coalition with more than one member.
pub fn taylorpoda(table: &CoalitionValueTable, xi: &XiAllocation) -> Result<Attribution> {
    xi.validate()?;
    taylorpoda_unchecked(table, xi)
}

/// As [`taylorpoda`] but accepts non-simplex weights (e.g. `ξ ≡ 1`, which
/// reduces to occlusion). Discrepancy is no longer guaranteed to vanish.
pub fn taylorpoda_unchecked(table: &CoalitionValueTable, xi: &XiAllocation) -> Result<Attribution> {
    require_full(table, "TaylorPODA")?;
    let d = table.dim();
    check_xi(table, xi, d)?;
    let dividends = harsanyi_all(table)?;
    let scores = taylorpoda_scores(table, &dividends, xi, d)?;
    Attribution::from_scores(Method::TaylorPoda, scores, table)
}

/// TaylorPODA with the dividend sum truncated to coalitions of at most
/// `sigma` members. Works on capped tables.
pub fn taylorpoda_capped(table: &CoalitionValueTable, xi: &XiAllocation, sigma: usize) -> Result<Attribution> {
    let d = table.dim();
    if sigma == 0 || sigma > d {
        return Err(Error::Config(format!("sigma must be in 1..={d}, got {sigma}")));
    }
    if table.sigma().cap(d) < sigma && !table.is_full() {
        return Err(Error::MissingCoalition(format!("table capped at {} cannot serve sigma={sigma}", table.sigma())));
    }
    xi.validate()?;
    check_xi(table, xi, sigma)?;
    let dividends = harsanyi_all(table)?;
    let scores = taylorpoda_scores(table, &dividends, xi, sigma)?;
    let method = if sigma >= d { Method::TaylorPoda } else { Method::TaylorPodaC };
    let mut attr = Attribution::from_scores(method, scores, table)?;
    attr.metadata.insert("sigma".into(), json!(sigma));
    Ok(attr)
}

/// Per-feature gap between capped and full TaylorPODA,
/// `sum_{S ∋ i, |S| > sigma} (1 - ξ_{i,S}) H(S)`. Needs a full table and
/// an allocation covering every coalition.
pub fn capped_gap(table: &CoalitionValueTable, xi: &XiAllocation, sigma: usize) -> Result<Vec<f64>> {
    require_full(table, "capped gap")?;
    let d = table.dim();
    check_xi(table, xi, d)?;
    let dividends = harsanyi_all(table)?;
    let mut gap = vec![0.0; d];
    dividends.for_each_interaction(|key, h| {
        if key.len() > sigma {
            let w = xi.get(key).expect("coverage checked");
            for i in key.members() {
                gap[i] += (1.0 - w[slot(key, i)]) * h;
            }
        }
    });
    Ok(gap)
}

pub const DEFAULT_LIME_SAMPLES: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimeConfig {
    pub n_samples: usize,
    /// Defaults to `0.75 * sqrt(d)`.
    pub kernel_width: Option<f64>,
    pub ridge_penalty: f64,
    pub seed: u64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        Self { n_samples: DEFAULT_LIME_SAMPLES, kernel_width: None, ridge_penalty: 1e-3, seed: 0 }
    }
}

/// Weighted ridge surrogate over random binary masks. Absent features take
/// the background mean; sample weights are `exp(-h^2 / width^2)` with `h`
/// the number of absent features. Scores are the fitted mask coefficients.
///
/// The returned attribution carries a discrepancy against `f(x)` and the
/// background baseline; its AUP is filled in by [`Attribution::rescore`].
pub fn lime(model: &ModelSpec, x: &FeatureVector, bg: &BackgroundSet, config: &LimeConfig) -> Result<Attribution> {
    let d = x.len();
    if bg.dim() != d || model.input_dim() != d {
        return Err(Error::Dimension(format!(
            "instance has {d} features, model {} and background {}",
            model.input_dim(),
            bg.dim()
        )));
    }
    if config.n_samples == 0 {
        return Err(Error::Config("LIME needs at least one sample".into()));
    }
    let bg_rows: Vec<&[f64]> = bg.rows().iter().map(Vec::as_slice).collect();
    let baseline = evaluate_rows(model, &bg_rows)?.iter().sum::<f64>() / bg.len() as f64;
    let fx = evaluate_rows(model, &[x.values()])?[0];

    let scores = if d == 1 { vec![fx - baseline] } else { fit_surrogate(model, x.values(), &bg.mean_row(), config)? };
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::SingularFit(format!("coefficient {i} is {}", scores[i])));
    }
    let discrepancy = baseline + scores.iter().sum::<f64>() - fx;
    let mut metadata = BTreeMap::new();
    metadata.insert("seed".into(), json!(config.seed));
    metadata.insert("n_samples".into(), json!(config.n_samples));
    Ok(Attribution { method: Method::Lime, scores, discrepancy, aup: f64::NAN, metadata })
}

fn fit_surrogate(model: &ModelSpec, x: &[f64], mean_row: &[f64], config: &LimeConfig) -> Result<Vec<f64>> {
    let d = x.len();
    let n = config.n_samples;
    let width = config.kernel_width.unwrap_or(0.75 * (d as f64).sqrt());
    if !(width.is_finite() && width > 0.0) {
        return Err(Error::Config(format!("kernel width must be positive, got {width}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    // The first sample is the instance itself.
    let masks: Vec<Vec<bool>> =
        (0..n).map(|k| if k == 0 { vec![true; d] } else { (0..d).map(|_| rng.random::<bool>()).collect() }).collect();
    let rows: Vec<Vec<f64>> =
        masks.iter().map(|m| (0..d).map(|i| if m[i] { x[i] } else { mean_row[i] }).collect()).collect();
    let row_refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let y = evaluate_rows(model, &row_refs)?;

    let p = d + 1;
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    let mut z = vec![0.0; p];
    for (mask, yk) in masks.iter().zip(&y) {
        let absent = mask.iter().filter(|b| !**b).count() as f64;
        let w = (-(absent * absent) / (width * width)).exp();
        z[0] = 1.0;
        for i in 0..d {
            z[i + 1] = if mask[i] { 1.0 } else { 0.0 };
        }
        for r in 0..p {
            rhs[r] += w * z[r] * yk;
            for c in 0..p {
                gram[(r, c)] += w * z[r] * z[c];
            }
        }
    }
    // intercept is not penalized
    for r in 1..p {
        gram[(r, r)] += config.ridge_penalty;
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::SingularFit(format!("normal equations not positive definite (n={n}, d={d})")))?;
    let beta = chol.solve(&rhs);
    Ok(beta.iter().skip(1).copied().collect())
}

/// With one feature every method reduces to `f(x) - f_∅(x)`.
pub fn single_feature(table: &CoalitionValueTable, method: Method) -> Result<Attribution> {
    if table.dim() != 1 {
        return Err(Error::Dimension(format!("expected 1 feature, table has {}", table.dim())));
    }
    Attribution::from_scores(method, vec![table.full_value() - table.empty_value()], table)
}

/// Guard shared by the exhaustive methods.
pub fn full_enumeration_supported(d: usize) -> bool {
    d <= MAX_FULL_FEATURES
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masking::{build_table, Sigma};

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    fn poly_table(json: &str, x: &[f64]) -> CoalitionValueTable {
        let m = ModelSpec::from_json_str(json).unwrap();
        let bg = BackgroundSet::single(vec![0.0; x.len()]).unwrap();
        build_table(&m, &fv(x), &bg, Sigma::Full).unwrap()
    }

    const PROD2: &str = r#"{"type":"polynomial","input_dim":2,"monomials":[{"coef":1,"exps":{"0":1,"1":1}}]}"#;
    const SUM2: &str =
        r#"{"type":"polynomial","input_dim":2,"monomials":[{"coef":1,"exps":{"0":1}},{"coef":1,"exps":{"1":1}}]}"#;
    const MIXED: &str = r#"{"type":"polynomial","input_dim":2,"monomials":[{"coef":1,"exps":{"0":1,"1":1}},{"coef":3,"exps":{"0":1}}]}"#;
    const PROD3: &str = r#"{"type":"polynomial","input_dim":3,"monomials":[{"coef":1,"exps":{"0":1,"1":1,"2":1}}]}"#;

    #[test]
    fn occlusion_examples() {
        assert_eq!(occ1(&poly_table(PROD2, &[2.0, 3.0])).unwrap().scores, vec![6.0, 6.0]);
        let add = occ1(&poly_table(SUM2, &[2.0, 3.0])).unwrap();
        assert_eq!(add.scores, vec![2.0, 3.0]);
        assert_eq!(add.discrepancy, 0.0);
        let c = r#"{"type":"polynomial","input_dim":2,"monomials":[{"coef":4,"exps":{}}]}"#;
        assert_eq!(occ1(&poly_table(c, &[2.0, 3.0])).unwrap().scores, vec![0.0, 0.0]);
    }

    #[test]
    fn shapley_examples() {
        // x1 x2 + 3 x1 at (2,3): f_∅=0, f_1=6, f_2=0, f_12=12 -> (9, 3)
        let s = shap_exact(&poly_table(MIXED, &[2.0, 3.0])).unwrap();
        assert_eq!(s.scores, vec![9.0, 3.0]);
        let sym = shap_exact(&poly_table(PROD2, &[2.0, 2.0])).unwrap();
        assert_eq!(sym.scores, vec![2.0, 2.0]);
        let t = poly_table(SUM2, &[2.0, 3.0]);
        let add = shap_exact(&t).unwrap();
        assert_eq!(add.scores, vec![2.0, 3.0]);
    }

    #[test]
    fn semivalue_reductions() {
        let t = poly_table(MIXED, &[2.0, 3.0]);
        let shap = shap_exact(&t).unwrap();
        let ws = weighted_shap(&t, &[WeightFamily::shapley(2)]).unwrap();
        for (a, b) in ws.scores.iter().zip(&shap.scores) {
            assert!((a - b).abs() <= 1e-12);
        }
        let empty_only = semivalue(&t, &WeightFamily::point_mass(2, 0)).unwrap();
        assert_eq!(empty_only.scores, vec![6.0, 0.0]);
        let top = semivalue(&t, &WeightFamily::point_mass(2, 1)).unwrap();
        assert_eq!(top.scores, occ1(&t).unwrap().scores);
        assert!(matches!(weighted_shap(&t, &[]), Err(Error::EmptyFamilyList)));
    }

    #[test]
    fn beta_grid_has_sixteen_normalized_families() {
        let grid = WeightFamily::beta_grid(6);
        assert_eq!(grid.len(), 16);
        for f in &grid {
            assert!((f.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(f.weights.iter().all(|w| w.is_finite() && *w > 0.0));
        }
        assert!((WeightFamily::shapley(6).independent_mass() - 1.0).abs() < 1e-12);
        assert!(WeightFamily::beta(6, 1.0, 1.0).independent_mass() > 1.0);
    }

    #[test]
    fn taylorpoda_hand_example() {
        let t = poly_table(PROD2, &[2.0, 3.0]);
        let xi = XiAllocation::uniform(2, 2).with_entry(CoalitionKey(0b11), vec![0.8, 0.2]).unwrap();
        let a = taylorpoda(&t, &xi).unwrap();
        assert!((a.scores[0] - 4.8).abs() < 1e-12);
        assert!((a.scores[1] - 1.2).abs() < 1e-12);
        assert!(a.discrepancy.abs() < 1e-12);
    }

    #[test]
    fn taylorpoda_uniform_is_shapley() {
        let t = poly_table(PROD3, &[1.5, -0.5, 2.0]);
        let a = taylorpoda(&t, &XiAllocation::uniform(3, 3)).unwrap();
        let s = shap_exact(&t).unwrap();
        for (x, y) in a.scores.iter().zip(&s.scores) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn taylorpoda_on_additive_matches_occlusion() {
        let t = poly_table(SUM2, &[2.0, 3.0]);
        let xi = XiAllocation::uniform(2, 2).with_entry(CoalitionKey(0b11), vec![0.3, 0.7]).unwrap();
        assert_eq!(taylorpoda(&t, &xi).unwrap().scores, occ1(&t).unwrap().scores);
    }

    #[test]
    fn all_ones_allocation_is_occlusion() {
        let t = poly_table(PROD3, &[1.5, -0.5, 2.0]);
        let ones = XiAllocation::constant(3, 3, 1.0);
        assert!(taylorpoda(&t, &ones).is_err());
        let a = taylorpoda_unchecked(&t, &ones).unwrap();
        assert_eq!(a.scores, occ1(&t).unwrap().scores);
    }

    #[test]
    fn capped_examples() {
        let t = poly_table(PROD3, &[1.0, 1.0, 1.0]);
        let xi = XiAllocation::uniform(3, 3).with_entry(CoalitionKey(0b111), vec![0.2, 0.3, 0.5]).unwrap();
        let capped = taylorpoda_capped(&t, &xi, 2).unwrap();
        assert_eq!(capped.method, Method::TaylorPodaC);
        assert_eq!(capped.scores, vec![1.0, 1.0, 1.0]);
        let gap = capped_gap(&t, &xi, 2).unwrap();
        for (g, w) in gap.iter().zip([0.2, 0.3, 0.5]) {
            assert!((g - (1.0 - w)).abs() < 1e-12);
        }
        let full = taylorpoda_capped(&t, &xi, 3).unwrap();
        assert_eq!(full.scores, taylorpoda(&t, &xi).unwrap().scores);
        assert_eq!(capped_gap(&t, &xi, 3).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn capped_table_rejects_exhaustive_methods() {
        let m = ModelSpec::from_json_str(
            r#"{"type":"polynomial","input_dim":4,"monomials":[{"coef":1,"exps":{"0":1,"1":1,"2":1,"3":1}}]}"#,
        )
        .unwrap();
        let bg = BackgroundSet::single(vec![0.0; 4]).unwrap();
        let t = build_table(&m, &fv(&[1.0, 2.0, 3.0, 4.0]), &bg, Sigma::Capped(1)).unwrap();
        assert!(matches!(shap_exact(&t), Err(Error::MissingCoalition(_))));
        // At d = 3 a cap of 1 plus the leave-one-out keys already covers everything.
        let m3 = ModelSpec::from_json_str(PROD3).unwrap();
        let bg3 = BackgroundSet::single(vec![0.0; 3]).unwrap();
        let t3 = build_table(&m3, &fv(&[1.0, 2.0, 3.0]), &bg3, Sigma::Capped(1)).unwrap();
        assert!(shap_exact(&t3).is_ok());
        assert!(occ1(&t).is_ok());
    }

    #[test]
    fn lime_constant_model_is_flat() {
        let m = ModelSpec::from_json_str(r#"{"type":"polynomial","input_dim":3,"monomials":[{"coef":2.5,"exps":{}}]}"#)
            .unwrap();
        let bg = BackgroundSet::new(vec![vec![0.0, 1.0, 2.0], vec![1.0, -1.0, 0.5]], "t").unwrap();
        let a = lime(&m, &fv(&[0.3, 0.2, 0.1]), &bg, &LimeConfig::default()).unwrap();
        assert!(a.scores.iter().all(|s| s.abs() < 1e-6), "{:?}", a.scores);
    }

    #[test]
    fn lime_is_seed_deterministic() {
        let m = ModelSpec::from_json_str(MIXED).unwrap();
        let bg = BackgroundSet::new(vec![vec![0.0, 1.0], vec![1.0, -1.0]], "t").unwrap();
        let cfg = LimeConfig { seed: 9, ..Default::default() };
        let a = lime(&m, &fv(&[2.0, 3.0]), &bg, &cfg).unwrap();
        let b = lime(&m, &fv(&[2.0, 3.0]), &bg, &cfg).unwrap();
        assert_eq!(
            a.scores.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.scores.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn single_feature_reduction() {
        let t = CoalitionValueTable::from_dense(fv(&[1.0]), vec![0.25, 1.0]).unwrap();
        for method in Method::ALL {
            assert_eq!(single_feature(&t, method).unwrap().scores, vec![0.75]);
        }
        assert_eq!(shap_exact(&t).unwrap().scores, vec![0.75]);
        assert_eq!(occ1(&t).unwrap().scores, vec![0.75]);
        assert_eq!(weighted_shap(&t, &WeightFamily::beta_grid(1)).unwrap().scores, vec![0.75]);
        assert_eq!(taylorpoda(&t, &XiAllocation::uniform(1, 1)).unwrap().scores, vec![0.75]);
    }

    #[test]
    fn method_names_roundtrip() {
        for m in
            [Method::Occ1, Method::Shap, Method::WeightedShap, Method::TaylorPoda, Method::TaylorPodaC, Method::Lime]
        {
            assert_eq!(m.id().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_value(m).unwrap(), json!(m.id()));
        }
    }

    #[test]
    fn serialization_shape() {
        let t = poly_table(PROD2, &[2.0, 3.0]);
        let j = occ1(&t).unwrap().to_json();
        assert_eq!(j["method"], "occ1");
        assert_eq!(j["scores"], json!([6.0, 6.0]));
        assert_eq!(j["discrepancy"], json!(6.0));
        assert!(j["aup"].is_number());
        assert!(j["metadata"].is_object());
    }
}
