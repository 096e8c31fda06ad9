#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use taylor_attr::{BackgroundSet, CoalitionKey, CoalitionValueTable, FeatureVector, ModelSpec, XiAllocation};

/// Shapley values by averaging marginal contributions over all `d!` orders.
pub fn permutation_shapley(table: &CoalitionValueTable) -> Vec<f64> {
    let d = table.dim();
    let mut perm: Vec<usize> = (0..d).collect();
    let mut totals = vec![0.0; d];
    let mut count = 0usize;
    permute(&mut perm, 0, &mut |order| {
        let mut key = CoalitionKey::EMPTY;
        let mut prev = table.value(key).unwrap();
        for &i in order {
            key = key.with(i);
            let cur = table.value(key).unwrap();
            totals[i] += cur - prev;
            prev = cur;
        }
        count += 1;
    });
    totals.iter().map(|t| t / count as f64).collect()
}

fn permute(v: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == v.len() {
        visit(v);
        return;
    }
    for j in k..v.len() {
        v.swap(k, j);
        permute(v, k + 1, visit);
        v.swap(k, j);
    }
}

pub fn random_polynomial(rng: &mut ChaCha8Rng, d: usize) -> ModelSpec {
    let n_terms = rng.random_range(1..=2 * d + 1);
    let monomials: Vec<_> = (0..n_terms)
        .map(|_| {
            let mut exps = serde_json::Map::new();
            for i in 0..d {
                if rng.random_bool(0.4) {
                    exps.insert(i.to_string(), json!(rng.random_range(1..=2u32)));
                }
            }
            json!({"coef": rng.random_range(-2.0..2.0), "exps": exps})
        })
        .collect();
    ModelSpec::from_json_str(&json!({"type":"polynomial","input_dim":d,"monomials":monomials}).to_string()).unwrap()
}

/// Product of all features plus a random linear part.
pub fn multiplicative_polynomial(rng: &mut ChaCha8Rng, d: usize) -> ModelSpec {
    let all: serde_json::Map<_, _> = (0..d).map(|i| (i.to_string(), json!(1))).collect();
    let mut monomials = vec![json!({"coef": rng.random_range(0.5..2.0), "exps": all})];
    for i in 0..d {
        monomials.push(json!({"coef": rng.random_range(-1.0..1.0), "exps": {i.to_string(): 1}}));
    }
    ModelSpec::from_json_str(&json!({"type":"polynomial","input_dim":d,"monomials":monomials}).to_string()).unwrap()
}

pub fn random_mlp(rng: &mut ChaCha8Rng, d: usize) -> ModelSpec {
    let acts = ["tanh", "logistic", "relu", "softplus"];
    let hidden = rng.random_range(3..=8);
    let layer = |rng: &mut ChaCha8Rng, n_in: usize, n_out: usize, act: &str| {
        let weights: Vec<Vec<f64>> =
            (0..n_out).map(|_| (0..n_in).map(|_| rng.random_range(-1.5..1.5)).collect()).collect();
        let bias: Vec<f64> = (0..n_out).map(|_| rng.random_range(-0.5..0.5)).collect();
        json!({"weights": weights, "bias": bias, "activation": act})
    };
    let act = acts[rng.random_range(0..acts.len())];
    let layers =
        vec![layer(rng, d, hidden, act), layer(rng, hidden, hidden, "tanh"), layer(rng, hidden, 1, "identity")];
    ModelSpec::from_json_str(&json!({"type":"mlp","input_dim":d,"layers":layers}).to_string()).unwrap()
}

pub fn random_instance(rng: &mut ChaCha8Rng, d: usize) -> FeatureVector {
    FeatureVector::new((0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

pub fn random_background(rng: &mut ChaCha8Rng, d: usize, n: usize) -> BackgroundSet {
    BackgroundSet::new((0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect(), "random")
        .unwrap()
}

/// Random valid allocation from normalized uniform weights.
pub fn random_xi(rng: &mut ChaCha8Rng, d: usize) -> XiAllocation {
    let mut xi = XiAllocation::uniform(d, d);
    let keys: Vec<CoalitionKey> = xi.entries().map(|(k, _)| k).collect();
    for key in keys {
        let raw: Vec<f64> = (0..key.len()).map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        xi = xi.with_entry(key, raw.iter().map(|r| r / total).collect()).unwrap();
    }
    xi
}
