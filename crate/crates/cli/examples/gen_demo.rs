//! Regenerates the files under `demo/`.
//!
//! cargo run -p taylor-attr-cli --example gen_demo -- demo

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use taylor_attr::oracle::evaluate_slice;
use taylor_attr::ModelSpec;

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "demo".into()));
    std::fs::create_dir_all(&dir).unwrap();

    // Two-feature polynomial: x0*x1 + 3*x0.
    let poly2 = json!({"type":"polynomial","input_dim":2,"monomials":[
        {"coef":1.0,"exps":{"0":1,"1":1}},{"coef":3.0,"exps":{"0":1}}]});
    write_json(&dir.join("poly2.json"), &poly2);
    write_csv(&dir.join("poly2_data.csv"), &["x0", "x1"], &[vec![2.0, 3.0], vec![1.0, -1.0], vec![-0.5, 2.0]]);
    write_csv(&dir.join("poly2_background.csv"), &["x0", "x1"], &[vec![0.0, 0.0]]);

    // Three-feature polynomial with pairwise and triple interactions.
    let poly3 = json!({"type":"polynomial","input_dim":3,"monomials":[
        {"coef":1.0,"exps":{"0":1,"1":1}},{"coef":2.0,"exps":{"1":1,"2":1}},
        {"coef":0.5,"exps":{"0":1,"1":1,"2":1}},{"coef":3.0,"exps":{"0":1}},{"coef":-1.0,"exps":{"2":2}}]});
    write_json(&dir.join("poly3.json"), &poly3);
    write_csv(&dir.join("poly3_beta.csv"), &["x0", "x1", "x2"], &[vec![0.5, -0.5, 1.0]]);

    let additive3 = json!({"type":"polynomial","input_dim":3,"monomials":[
        {"coef":2.0,"exps":{"0":1}},{"coef":-1.0,"exps":{"1":1}},{"coef":0.5,"exps":{"2":2}}]});
    write_json(&dir.join("additive3.json"), &additive3);

    mlp_bundle(&dir, "mlp8", 8, 100, 200, 8);
    mlp_bundle(&dir, "mlp12", 12, 100, 200, 12);
}

fn mlp_bundle(dir: &Path, stem: &str, d: usize, n_data: usize, n_bg: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 16;
    let mut layer = |n_in: usize, n_out: usize, act: &str| {
        let scale = 1.0 / (n_in as f64).sqrt();
        let weights: Vec<Vec<f64>> =
            (0..n_out).map(|_| (0..n_in).map(|_| round4(rng.random_range(-2.0..2.0) * scale)).collect()).collect();
        let bias: Vec<f64> = (0..n_out).map(|_| round4(rng.random_range(-0.3..0.3))).collect();
        json!({"weights": weights, "bias": bias, "activation": act})
    };
    let layers = vec![layer(d, h, "tanh"), layer(h, h, "tanh"), layer(h, 1, "identity")];
    let spec = json!({"type":"mlp","input_dim":d,"layers":layers});
    write_json(&dir.join(format!("{stem}.json")), &spec);
    let model = ModelSpec::from_json_str(&spec.to_string()).unwrap();

    let mut draw = |n: usize| -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..d).map(|_| round4(rng.random_range(-2.0..2.0))).collect()).collect()
    };
    let data = draw(n_data);
    let background = draw(n_bg);
    let names: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    let mut header: Vec<&str> = names.iter().map(String::as_str).collect();
    let bg_rows = background.clone();
    write_csv(&dir.join(format!("{stem}_background.csv")), &header, &bg_rows);

    let outputs: Vec<f64> = data.iter().map(|r| evaluate_slice(&model, r).unwrap()).collect();
    let mut sorted = outputs.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    header.push("y");
    let labelled: Vec<Vec<f64>> = data
        .iter()
        .zip(&outputs)
        .map(|(r, y)| {
            let mut row = r.clone();
            row.push(if *y >= median { 1.0 } else { 0.0 });
            row
        })
        .collect();
    write_csv(&dir.join(format!("{stem}_data.csv")), &header, &labelled);
}

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

fn write_json(path: &Path, value: &Value) {
    std::fs::write(path, serde_json::to_string_pretty(value).unwrap() + "\n").unwrap();
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) {
    let mut w = csv::Writer::from_path(path).unwrap();
    w.write_record(header).unwrap();
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string())).unwrap();
    }
    w.flush().unwrap();
}
