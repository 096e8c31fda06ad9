//! End-to-end explanation, evaluation and postulate diagnosis built on the
//! individual modules. Every method for an instance reads one shared table.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::allocation::{generate_candidates, optimize_xi, optimize_xi_capped, CandidateConfig, XiAllocation};
use crate::attribution::{
    lime, occ1, shap_exact, single_feature, weighted_shap, Attribution, LimeConfig, Method, WeightFamily,
};
use crate::error::{Error, Result};
use crate::masking::{build_table, BackgroundSet, CoalitionValueTable, Sigma};
use crate::metrics::{aggregate, inclusion_auc_curve, inclusion_mse_curve, required_keys, MetricReport, SampleMetrics};
use crate::oracle::{FeatureVector, ModelSpec};
use crate::reference::{check_postulates, interaction_sums, taylor_terms, GenericAllocation, PostulateReport};
use crate::report::ForcePlotData;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExplainOptions {
    pub methods: Vec<Method>,
    pub sigma: Sigma,
    pub n_candidates: usize,
    pub include_uniform: bool,
    pub alpha: f64,
    pub lime: LimeConfig,
    /// Include the selected allocation in each instance report.
    pub dump_xi: bool,
}

impl Default for ExplainOptions {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            sigma: Sigma::Full,
            n_candidates: crate::allocation::DEFAULT_CANDIDATES,
            include_uniform: true,
            alpha: crate::allocation::DEFAULT_ALPHA,
            lime: LimeConfig::default(),
            dump_xi: false,
        }
    }
}

/// Seed for sample `index` under a master seed.
pub fn sample_seed(master: u64, index: usize) -> u64 {
    master ^ index as u64
}

#[derive(Clone, Debug, Serialize)]
pub struct InstanceExplanation {
    pub sample: usize,
    pub seed: u64,
    pub features: Vec<String>,
    pub values: Vec<f64>,
    pub base_value: f64,
    pub prediction: f64,
    pub sigma: String,
    pub table_size: usize,
    pub attributions: Vec<Attribution>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi_star: Option<serde_json::Value>,
    pub force_plots: Vec<ForcePlotData>,
}

/// Runs the selected methods on one instance. Returns the explanation and
/// the (possibly extended) table it was scored against.
pub fn explain_instance(
    model: &ModelSpec,
    x: &FeatureVector,
    bg: &BackgroundSet,
    options: &ExplainOptions,
    sample: usize,
    seed: u64,
) -> Result<(InstanceExplanation, CoalitionValueTable)> {
    let d = x.len();
    let cap = options.sigma.cap(d);
    let mut table = build_table(model, x, bg, options.sigma)?;
    let mut attributions = Vec::with_capacity(options.methods.len());
    let mut xi_star = None;

    for &method in &options.methods {
        let mut attr = if d == 1 {
            single_feature(&table, method)?
        } else {
            match method {
                Method::Occ1 => occ1(&table)?,
                Method::Shap => shap_exact(&table)?,
                Method::WeightedShap => weighted_shap(&table, &WeightFamily::beta_grid(d))?,
                Method::TaylorPoda | Method::TaylorPodaC => {
                    let cfg = CandidateConfig {
                        n_candidates: options.n_candidates,
                        include_uniform: options.include_uniform,
                        alpha: options.alpha,
                        seed,
                    };
                    let candidates = generate_candidates(d, cap, &cfg)?;
                    let (xi, attr) = if table.is_full() && cap == d {
                        optimize_xi(&table, &candidates)?
                    } else {
                        let (xi, attr, extended) = optimize_xi_capped(&table, &candidates, cap, model, bg)?;
                        table = extended;
                        (xi, attr)
                    };
                    if options.dump_xi {
                        xi_star = Some(xi.to_json());
                    }
                    attr
                }
                Method::Lime => lime(model, x, bg, &LimeConfig { seed, ..options.lime.clone() })?,
            }
        };
        if matches!(method, Method::TaylorPoda | Method::TaylorPodaC) {
            attr.metadata.insert("sigma".into(), json!(options.sigma));
            attr.metadata.insert("seed".into(), json!(seed));
            attr.metadata.insert("n_candidates".into(), json!(options.n_candidates));
            attr.metadata.insert("include_uniform".into(), json!(options.include_uniform));
        }
        attributions.push(attr);
    }

    // Fill in AUP for anything whose top-m coalitions were not in the table.
    let needed: Vec<_> = attributions
        .iter()
        .filter(|a| a.aup.is_nan() || a.method == Method::Lime)
        .flat_map(|a| required_keys(&a.scores))
        .collect();
    if !needed.is_empty() {
        table = table.extended(model, bg, needed)?;
    }
    for attr in attributions.iter_mut() {
        attr.rescore(&table)?;
    }

    let force_plots =
        attributions.iter().map(|a| ForcePlotData::new(a, x, table.empty_value(), table.full_value())).collect();
    let explanation = InstanceExplanation {
        sample,
        seed,
        features: x.display_names(),
        values: x.values().to_vec(),
        base_value: table.empty_value(),
        prediction: table.full_value(),
        sigma: options.sigma.to_string(),
        table_size: table.len(),
        attributions,
        xi_star,
        force_plots,
    };
    Ok((explanation, table))
}

/// Explains every row; output order follows `rows` regardless of scheduling.
pub fn explain_all(
    model: &ModelSpec,
    rows: &[FeatureVector],
    bg: &BackgroundSet,
    options: &ExplainOptions,
    master_seed: u64,
) -> Result<Vec<(InstanceExplanation, CoalitionValueTable)>> {
    rows.par_iter()
        .enumerate()
        .map(|(i, x)| explain_instance(model, x, bg, options, i, sample_seed(master_seed, i)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    Aup,
    Discrepancy,
    InclusionMse,
    InclusionAuc,
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "aup" => MetricKind::Aup,
            "discrepancy" => MetricKind::Discrepancy,
            "inclusion-mse" => MetricKind::InclusionMse,
            "inclusion-auc" => MetricKind::InclusionAuc,
            other => return Err(Error::Config(format!("unknown metric `{other}`"))),
        })
    }
}

/// Aggregates per-sample explanations into a metric report.
/// `labels` (positive iff > 0.5) are required for inclusion AUC.
pub fn evaluate_explanations(
    explained: &[(InstanceExplanation, CoalitionValueTable)],
    labels: Option<&[f64]>,
    metrics: &[MetricKind],
) -> Result<MetricReport> {
    if explained.len() < 2 {
        return Err(Error::InsufficientSamples(explained.len()));
    }
    let methods: Vec<Method> = explained[0].0.attributions.iter().map(|a| a.method).collect();
    let mut report = MetricReport::default();

    for (exp, _) in explained {
        for a in &exp.attributions {
            report.per_sample.push(SampleMetrics {
                sample: exp.sample,
                method: a.method,
                aup: a.aup,
                discrepancy: a.discrepancy,
            });
        }
    }

    for (m_idx, method) in methods.iter().enumerate() {
        fn pick(e: &InstanceExplanation, m: usize) -> &Attribution {
            &e.attributions[m]
        }
        let attr_of = |e| pick(e, m_idx);
        let mut agg = BTreeMap::new();
        let mut scalars = BTreeMap::new();
        if metrics.contains(&MetricKind::Aup) {
            let v: Vec<f64> = explained.iter().map(|(e, _)| attr_of(e).aup).collect();
            agg.insert("aup".to_string(), aggregate(&v)?);
        }
        if metrics.contains(&MetricKind::Discrepancy) {
            let v: Vec<f64> = explained.iter().map(|(e, _)| attr_of(e).discrepancy).collect();
            agg.insert("discrepancy".to_string(), aggregate(&v)?);
            let abs: Vec<f64> = v.iter().map(|x| x.abs()).collect();
            agg.insert("abs_discrepancy".to_string(), aggregate(&abs)?);
        }
        if metrics.contains(&MetricKind::InclusionMse) {
            let samples: Vec<(&[f64], &CoalitionValueTable)> =
                explained.iter().map(|(e, t)| (attr_of(e).scores.as_slice(), t)).collect();
            let curve = inclusion_mse_curve(&samples)?;
            scalars.insert("inclusion_mse".to_string(), curve.iter().sum::<f64>() / curve.len() as f64);
            report.inclusion_curve.insert(format!("{}/inclusion_mse", method.id()), curve);
        }
        if metrics.contains(&MetricKind::InclusionAuc) {
            let labels = labels.ok_or_else(|| Error::Config("inclusion-auc needs a label column".into()))?;
            let samples: Vec<(&[f64], &CoalitionValueTable, bool)> =
                explained.iter().map(|(e, t)| (attr_of(e).scores.as_slice(), t, labels[e.sample] > 0.5)).collect();
            let curve = inclusion_auc_curve(&samples)?;
            scalars.insert("inclusion_auc".to_string(), curve.iter().sum::<f64>() / curve.len() as f64);
            report.inclusion_curve.insert(format!("{}/inclusion_auc", method.id()), curve);
        }
        report.aggregates.insert(method.id().to_string(), agg);
        if !scalars.is_empty() {
            report.dataset_metrics.insert(method.id().to_string(), scalars);
        }
    }
    Ok(report)
}

/// Postulate outcome for one method across a battery of instances.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnosisRow {
    pub method: Method,
    /// `None` for methods outside the Taylor allocation framework.
    pub precision: Option<bool>,
    pub federation: Option<bool>,
    pub zero_discrepancy: Option<bool>,
    pub adaptation: Option<bool>,
}

impl DiagnosisRow {
    pub fn marks(&self) -> [String; 4] {
        let mark = |v: Option<bool>| match v {
            Some(true) => "✓".to_string(),
            Some(false) => "✗".to_string(),
            None => "n/a".to_string(),
        };
        [mark(self.precision), mark(self.federation), mark(self.zero_discrepancy), mark(self.adaptation)]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnosis {
    pub rows: Vec<DiagnosisRow>,
    pub instances: usize,
    /// No instance had any interaction term; all methods coincide on
    /// the interaction-free part.
    pub interaction_free: bool,
}

/// Checks each method's postulates on every instance against a polynomial
/// model expanded at the single background row. A postulate holds for a
/// method only if it holds on every instance.
pub fn diagnose(
    model: &ModelSpec,
    instances: &[FeatureVector],
    bg: &BackgroundSet,
    methods: &[Method],
    candidates: &CandidateConfig,
) -> Result<Diagnosis> {
    if model.as_polynomial().is_none() {
        return Err(Error::NotPolynomial);
    }
    if bg.len() != 1 {
        return Err(Error::BackgroundNotSingleRow(bg.len()));
    }
    if instances.is_empty() {
        return Err(Error::InsufficientSamples(0));
    }
    let beta = FeatureVector::new(bg.rows()[0].clone())?;
    let mut interaction_free = true;
    let mut per_method: Vec<Option<PostulateReport>> = vec![None; methods.len()];

    for (n, x) in instances.iter().enumerate() {
        let d = x.len();
        let table = build_table(model, x, bg, Sigma::Full)?;
        if !interaction_sums(&taylor_terms(model, x, &beta)?.terms).is_empty() {
            interaction_free = false;
        }
        for (slot, &method) in methods.iter().enumerate() {
            let (attr, allocation) = match method {
                Method::Lime => continue,
                Method::Occ1 => (occ1(&table)?, GenericAllocation::occlusion(d)),
                Method::Shap => (shap_exact(&table)?, GenericAllocation::shapley(d)),
                Method::WeightedShap => {
                    let families = WeightFamily::beta_grid(d);
                    let attr = weighted_shap(&table, &families)?;
                    let idx = attr.metadata["family_index"].as_u64().unwrap_or(0) as usize;
                    (attr, GenericAllocation::semivalue(&families[idx]))
                }
                Method::TaylorPoda | Method::TaylorPodaC => {
                    let cfg = CandidateConfig { seed: sample_seed(candidates.seed, n), ..candidates.clone() };
                    let cands = generate_candidates(d, d, &cfg)?;
                    let (xi, attr): (XiAllocation, Attribution) = optimize_xi(&table, &cands)?;
                    (attr, GenericAllocation::taylorpoda(&xi))
                }
            };
            let r = check_postulates(&attr, &allocation, model, x, bg)?;
            per_method[slot] = Some(match per_method[slot] {
                Some(prev) => prev.and(r),
                None => r,
            });
        }
    }

    let rows = methods
        .iter()
        .zip(per_method)
        .map(|(&method, r)| DiagnosisRow {
            method,
            precision: r.map(|r| r.precision),
            federation: r.map(|r| r.federation),
            zero_discrepancy: r.map(|r| r.zero_discrepancy),
            adaptation: method.adaptation(),
        })
        .collect();
    Ok(Diagnosis { rows, instances: instances.len(), interaction_free })
}
