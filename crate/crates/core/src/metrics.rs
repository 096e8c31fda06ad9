//! Ordering-quality and additivity metrics.
//!
//! All curves use the same masked-output table that produced the
//! attributions: the top-`m` coalition's value stands in for the
//! conditional expectation of the model given those features.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::attribution::{Attribution, Method};
use crate::error::{Error, Result};
use crate::masking::{CoalitionKey, CoalitionValueTable};

/// z-value for a two-sided 95% normal interval.
pub const Z_95: f64 = 1.96;

/// Feature indices by descending `|a_i|`; ties go to the lower index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ImportanceOrder(Vec<usize>);

impl ImportanceOrder {
    pub fn from_scores(scores: &[f64]) -> Self {
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        idx.sort_by(|&a, &b| scores[b].abs().total_cmp(&scores[a].abs()).then(a.cmp(&b)));
        Self(idx)
    }

    pub fn ranking(&self) -> &[usize] {
        &self.0
    }

    /// The `m` most important features.
    pub fn top(&self, m: usize) -> CoalitionKey {
        CoalitionKey::from_members(self.0[..m].iter().copied())
    }

    /// Top-`m` coalitions for `m = 1..=d`.
    pub fn prefixes(&self) -> Vec<CoalitionKey> {
        (1..=self.0.len()).map(|m| self.top(m)).collect()
    }
}

/// Coalitions a recovery curve for `scores` reads from the table.
pub fn required_keys(scores: &[f64]) -> Vec<CoalitionKey> {
    ImportanceOrder::from_scores(scores).prefixes()
}

/// `f(x) - f_{I(m)}(x)` for `m = 1..=d`.
pub fn recovery_curve(scores: &[f64], table: &CoalitionValueTable) -> Result<Vec<f64>> {
    check_len(scores, table)?;
    let fx = table.full_value();
    ImportanceOrder::from_scores(scores).prefixes().into_iter().map(|k| table.value(k).map(|v| fx - v)).collect()
}

/// Area under the prediction-recovery error curve,
/// `sum_{m=1..d} |f(x) - f_{I(m)}(x)|`.
pub fn aup_scores(scores: &[f64], table: &CoalitionValueTable) -> Result<f64> {
    Ok(recovery_curve(scores, table)?.iter().map(|e| e.abs()).sum())
}

pub fn aup(attr: &Attribution, table: &CoalitionValueTable) -> Result<f64> {
    aup_scores(&attr.scores, table)
}

/// Signed `f_∅(x) + sum_i a_i - f(x)`.
pub fn discrepancy_scores(scores: &[f64], table: &CoalitionValueTable) -> f64 {
    table.empty_value() + scores.iter().sum::<f64>() - table.full_value()
}

pub fn discrepancy(attr: &Attribution, table: &CoalitionValueTable) -> f64 {
    discrepancy_scores(&attr.scores, table)
}

fn check_len(scores: &[f64], table: &CoalitionValueTable) -> Result<()> {
    if scores.len() != table.dim() {
        return Err(Error::Dimension(format!("{} scores for a {}-feature table", scores.len(), table.dim())));
    }
    Ok(())
}

fn common_dim(dims: impl Iterator<Item = usize>) -> Result<usize> {
    let mut d = None;
    for k in dims {
        match d {
            None => d = Some(k),
            Some(prev) if prev != k => return Err(Error::Dimension(format!("samples mix {prev} and {k} features"))),
            _ => {}
        }
    }
    d.ok_or(Error::InsufficientSamples(0))
}

/// Per-`m` mean squared recovery error across samples.
pub fn inclusion_mse_curve(samples: &[(&[f64], &CoalitionValueTable)]) -> Result<Vec<f64>> {
    let d = common_dim(samples.iter().map(|(_, t)| t.dim()))?;
    let mut curve = vec![0.0; d];
    for (scores, table) in samples {
        for (acc, err) in curve.iter_mut().zip(recovery_curve(scores, table)?) {
            *acc += err * err;
        }
    }
    let n = samples.len() as f64;
    curve.iter_mut().for_each(|c| *c /= n);
    Ok(curve)
}

/// `(1/d) sum_m mean_samples (f(x) - f_{I(m)}(x))^2`.
pub fn inclusion_mse(samples: &[(&[f64], &CoalitionValueTable)]) -> Result<f64> {
    let curve = inclusion_mse_curve(samples)?;
    Ok(curve.iter().sum::<f64>() / curve.len() as f64)
}

/// Mann–Whitney ROC AUC; tied pairs count one half.
pub fn roc_auc(predictions: &[f64], labels: &[bool]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::Dimension(format!("{} predictions for {} labels", predictions.len(), labels.len())));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::DegenerateLabels);
    }
    // Average ranks over ties.
    let mut order: Vec<usize> = (0..predictions.len()).collect();
    order.sort_by(|&a, &b| predictions[a].total_cmp(&predictions[b]));
    let mut ranks = vec![0.0; predictions.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && predictions[order[end]] == predictions[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    let pos_rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let np = positives as f64;
    let u = pos_rank_sum - np * (np + 1.0) / 2.0;
    Ok(u / (np * negatives as f64))
}

/// ROC AUC of the top-`m` masked predictions against labels, per `m`.
pub fn inclusion_auc_curve(samples: &[(&[f64], &CoalitionValueTable, bool)]) -> Result<Vec<f64>> {
    let d = common_dim(samples.iter().map(|(_, t, _)| t.dim()))?;
    let labels: Vec<bool> = samples.iter().map(|(_, _, l)| *l).collect();
    let mut per_m = vec![Vec::with_capacity(samples.len()); d];
    for (scores, table, _) in samples {
        check_len(scores, table)?;
        for (m, key) in ImportanceOrder::from_scores(scores).prefixes().into_iter().enumerate() {
            per_m[m].push(table.value(key)?);
        }
    }
    per_m.iter().map(|preds| roc_auc(preds, &labels)).collect()
}

/// Mean over `m = 1..d` of the inclusion ROC AUC.
pub fn inclusion_auc(samples: &[(&[f64], &CoalitionValueTable, bool)]) -> Result<f64> {
    let curve = inclusion_auc_curve(samples)?;
    Ok(curve.iter().sum::<f64>() / curve.len() as f64)
}

/// Mean with a normal-approximation 95% interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Aggregate {
    pub fn half_width(&self) -> f64 {
        (self.ci_high - self.ci_low) / 2.0
    }
}

impl fmt::Display for Aggregate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4} ({:.4}, {:.4})", self.mean, self.ci_low, self.ci_high)
    }
}

/// `mean ± 1.96 s / sqrt(n)` with `s` the sample standard deviation.
pub fn aggregate(values: &[f64]) -> Result<Aggregate> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientSamples(n));
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let half = Z_95 * var.sqrt() / nf.sqrt();
    Ok(Aggregate { mean, ci_low: mean - half, ci_high: mean + half })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleMetrics {
    pub sample: usize,
    pub method: Method,
    pub aup: f64,
    pub discrepancy: f64,
}

/// Dataset-level results, grouped by method then metric.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MetricReport {
    pub per_sample: Vec<SampleMetrics>,
    pub aggregates: BTreeMap<String, BTreeMap<String, Aggregate>>,
    /// Per-method inclusion curve (MSE for regression, AUC when labels exist).
    pub inclusion_curve: BTreeMap<String, Vec<f64>>,
    /// Dataset-level scalars without intervals (inclusion MSE / AUC).
    pub dataset_metrics: BTreeMap<String, BTreeMap<String, f64>>,
}
