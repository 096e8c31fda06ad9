//! Acceptance gate. Prints one PASS/FAIL line per criterion and fails the
//! run if any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taylor_attr::allocation::{CandidateConfig, XiAllocation};
use taylor_attr::attribution::{capped_gap, occ1, shap_exact, taylorpoda};
use taylor_attr::dividends::{harsanyi_all, mobius_identity_check};
use taylor_attr::pipeline::{diagnose, explain_instance, ExplainOptions};
use taylor_attr::reference::{independent_sum, interaction_sum, taylor_terms};
use taylor_attr::{build_table, BackgroundSet, CoalitionKey, FeatureVector, Method, ModelSpec, Sigma};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn demo(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../demo").join(name)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn battery() -> Vec<(ModelSpec, FeatureVector, BackgroundSet)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..50)
        .map(|k| {
            let d = 2 + k % 6;
            let m = if k % 2 == 0 { random_mlp(&mut rng, d) } else { random_polynomial(&mut rng, d) };
            let x = random_instance(&mut rng, d);
            let rows = rng.random_range(1..=4);
            (m, x, random_background(&mut rng, d, rows))
        })
        .collect()
}

fn max_dev(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn shapley_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (m, x, bg) in battery() {
        let t = build_table(&m, &x, &bg, Sigma::Full).map_err(|e| e.to_string())?;
        let shap = shap_exact(&t).map_err(|e| e.to_string())?;
        worst = worst.max(max_dev(&shap.scores, &permutation_shapley(&t)));
    }
    let elapsed = start.elapsed();
    ensure(worst <= 1e-9, || format!("max deviation {worst:e}"))?;
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!("50 models, max deviation {worst:.1e}, {:.2}s", elapsed.as_secs_f64()))
}

fn uniform_taylorpoda_is_shap() -> Outcome {
    let mut worst = 0.0f64;
    for (m, x, bg) in battery() {
        let t = build_table(&m, &x, &bg, Sigma::Full).map_err(|e| e.to_string())?;
        let d = x.len();
        let tp = taylorpoda(&t, &XiAllocation::uniform(d, d)).map_err(|e| e.to_string())?;
        let shap = shap_exact(&t).map_err(|e| e.to_string())?;
        worst = worst.max(max_dev(&tp.scores, &shap.scores));
    }
    ensure(worst <= 1e-9, || format!("max deviation {worst:e}"))?;
    Ok(format!("50 models, max deviation {worst:.1e}"))
}

fn zero_discrepancy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for k in 0..100 {
        let d = 2 + k % 9;
        let m = if k % 2 == 0 { random_mlp(&mut rng, d) } else { random_polynomial(&mut rng, d) };
        let x = random_instance(&mut rng, d);
        let bg = random_background(&mut rng, d, 3);
        let t = build_table(&m, &x, &bg, Sigma::Full).map_err(|e| e.to_string())?;
        worst = worst.max(shap_exact(&t).map_err(|e| e.to_string())?.discrepancy.abs());
        for _ in 0..100 {
            let a = taylorpoda(&t, &random_xi(&mut rng, d)).map_err(|e| e.to_string())?;
            worst = worst.max(a.discrepancy.abs());
        }
    }
    ensure(worst <= 1e-9, || format!("max |discrepancy| {worst:e}"))?;

    let prod = ModelSpec::from_json_str(
        r#"{"type":"polynomial","input_dim":2,"monomials":[{"coef":1,"exps":{"0":1,"1":1}}]}"#,
    )
    .unwrap();
    let t = build_table(
        &prod,
        &FeatureVector::new(vec![2.0, 3.0]).unwrap(),
        &BackgroundSet::single(vec![0.0, 0.0]).unwrap(),
        Sigma::Full,
    )
    .unwrap();
    let occ = occ1(&t).unwrap().discrepancy;
    ensure((occ - 6.0).abs() < 1e-12, || format!("OCC-1 worked example gave {occ}"))?;

    let mut nonzero = 0;
    for _ in 0..100 {
        let d = rng.random_range(2..=6);
        let m = multiplicative_polynomial(&mut rng, d);
        let x = random_instance(&mut rng, d);
        let bg = random_background(&mut rng, d, 2);
        let t = build_table(&m, &x, &bg, Sigma::Full).unwrap();
        if occ1(&t).unwrap().discrepancy.abs() > 1e-9 {
            nonzero += 1;
        }
    }
    ensure(nonzero >= 95, || format!("OCC-1 nonzero on only {nonzero}/100"))?;
    Ok(format!("10000 allocations max |discrepancy| {worst:.1e}; OCC-1 example +6, nonzero {nonzero}/100"))
}

fn mobius_identities() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let d = rng.random_range(2..=6);
        let m = random_polynomial(&mut rng, d);
        let x = random_instance(&mut rng, d);
        let beta = random_instance(&mut rng, d);
        let bg = BackgroundSet::single(beta.values().to_vec()).unwrap();
        let t = build_table(&m, &x, &bg, Sigma::Full).map_err(|e| e.to_string())?;
        let h = harsanyi_all(&t).map_err(|e| e.to_string())?;
        let terms = taylor_terms(&m, &x, &beta).map_err(|e| e.to_string())?.terms;
        worst = worst.max(mobius_identity_check(&t, &h).map_err(|e| e.to_string())?);
        for (key, value) in h.entries() {
            let analytic = match key.len() {
                0 => t.empty_value(),
                1 => independent_sum(&terms, key.members().next().unwrap()),
                _ => interaction_sum(&terms, key),
            };
            worst = worst.max((value - analytic).abs());
        }
        let full = CoalitionKey::full(d);
        for i in 0..d {
            let lhs = t.full_value() - t.value(full.without(i)).unwrap();
            let rhs = independent_sum(&terms, i)
                + h.entries()
                    .iter()
                    .filter(|(k, _)| k.len() > 1 && k.contains(i))
                    .map(|(k, _)| interaction_sum(&terms, *k))
                    .sum::<f64>();
            worst = worst.max((lhs - rhs).abs());
        }
    }
    let elapsed = start.elapsed();
    ensure(worst <= 1e-9, || format!("max deviation {worst:e}"))?;
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("100 cases, max deviation {worst:.1e}, {:.2}s", elapsed.as_secs_f64()))
}

fn optimizer_dominance() -> Outcome {
    let start = Instant::now();
    let model = taylor_attr::load_model(demo("mlp8.json")).map_err(|e| e.to_string())?;
    let data = taylor_attr::data::read_labeled_csv(&demo("mlp8_data.csv"), Some("y")).map_err(|e| e.to_string())?;
    let bg = BackgroundSet::from_csv(demo("mlp8_background.csv"), &[])
        .and_then(|b| b.subsample(32, 0))
        .map_err(|e| e.to_string())?;
    let opts = ExplainOptions { methods: vec![Method::Shap, Method::TaylorPoda], ..Default::default() };
    let (mut tp_sum, mut shap_sum, mut violations, mut within_rounding) = (0.0, 0.0, 0, 0);
    for (i, row) in data.rows.iter().enumerate() {
        let x = FeatureVector::new(row.clone()).unwrap();
        let (exp, _) = explain_instance(&model, &x, &bg, &opts, i, 42 ^ i as u64).map_err(|e| e.to_string())?;
        let (shap, tp) = (exp.attributions[0].aup, exp.attributions[1].aup);
        if tp > shap + 1e-9 {
            violations += 1;
        } else if tp > shap {
            within_rounding += 1;
        }
        tp_sum += tp;
        shap_sum += shap;
    }
    let n = data.rows.len() as f64;
    let elapsed = start.elapsed();
    ensure(data.rows.len() == 100, || format!("{} samples", data.rows.len()))?;
    ensure(violations == 0, || format!("{violations} samples with AUP(TaylorPODA) > AUP(SHAP)"))?;
    ensure(elapsed < Duration::from_secs(120), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "mean AUP TaylorPODA {:.4} <= SHAP {:.4}, {within_rounding} samples within 1e-9 slack, {:.2}s",
        tp_sum / n,
        shap_sum / n,
        elapsed.as_secs_f64()
    ))
}

fn capped_limit() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let d = rng.random_range(2..=7);
        let m = random_polynomial(&mut rng, d);
        let t =
            build_table(&m, &random_instance(&mut rng, d), &random_background(&mut rng, d, 2), Sigma::Full).unwrap();
        let gap = capped_gap(&t, &random_xi(&mut rng, d), d).map_err(|e| e.to_string())?;
        ensure(gap.iter().all(|g| *g == 0.0), || format!("nonzero gap at sigma=d: {gap:?}"))?;
    }
    let m = ModelSpec::from_json_str(
        r#"{"type":"polynomial","input_dim":3,"monomials":[{"coef":1,"exps":{"0":1,"1":1,"2":1}}]}"#,
    )
    .unwrap();
    let t = build_table(
        &m,
        &FeatureVector::new(vec![1.0; 3]).unwrap(),
        &BackgroundSet::single(vec![0.0; 3]).unwrap(),
        Sigma::Full,
    )
    .unwrap();
    for _ in 0..20 {
        let xi = random_xi(&mut rng, 3);
        let gap = capped_gap(&t, &xi, 2).map_err(|e| e.to_string())?;
        for (i, g) in gap.iter().enumerate() {
            let expected = 1.0 - xi.weight(CoalitionKey::full(3), i).unwrap();
            ensure((g - expected).abs() <= 1e-12, || format!("gap {g} vs {expected}"))?;
        }
    }
    Ok("gap(d) = 0 on 50 tables; gap(2) = 1 - xi_{i,G} on x1*x2*x3".into())
}

fn postulate_matrix() -> Outcome {
    let model = taylor_attr::load_model(demo("poly3.json")).map_err(|e| e.to_string())?;
    let bg = BackgroundSet::from_csv(demo("poly3_beta.csv"), &[]).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let xs: Vec<FeatureVector> = (0..8).map(|_| random_instance(&mut rng, 3)).collect();
    let dx = diagnose(&model, &xs, &bg, &Method::ALL, &CandidateConfig::default()).map_err(|e| e.to_string())?;
    let expected = [
        ["✓", "✓", "✗", "✗"],
        ["✓", "✓", "✓", "✗"],
        ["✗", "✓", "✗", "✓"],
        ["✓", "✓", "✓", "✓"],
        ["n/a", "n/a", "n/a", "n/a"],
    ];
    let mut lines = Vec::new();
    for (row, want) in dx.rows.iter().zip(expected) {
        let got = row.marks();
        ensure(got == want, || format!("{}: got {got:?}, want {want:?}", row.method.label()))?;
        lines.push(format!("{} [{}]", row.method.label(), got.join(" ")));
    }
    Ok(lines.join(", "))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_taylor-attr"))
        .args(args)
        .stdout(std::process::Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    ensure(status.success(), || format!("{args:?} exited with {status}"))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |n: &str| demo(n).display().to_string();
    let mlp_common = |out: &str, workers: &str| -> Vec<String> {
        vec![
            "--model".into(),
            p("mlp8.json"),
            "--data".into(),
            p("mlp8_data.csv"),
            "--background".into(),
            p("mlp8_background.csv"),
            "--label-col".into(),
            "y".into(),
            "--seed".into(),
            "42".into(),
            "--workers".into(),
            workers.into(),
            "--output".into(),
            out.into(),
        ]
    };
    let mut checked = Vec::new();
    for (name, build) in [
        (
            "explain",
            Box::new(|out: &str, w: &str| {
                let mut a = vec!["explain".to_string()];
                a.extend(mlp_common(out, w));
                a.extend(["--dump-xi".to_string()]);
                a
            }) as Box<dyn Fn(&str, &str) -> Vec<String>>,
        ),
        (
            "explain-capped",
            Box::new(|out: &str, w: &str| {
                let mut a = vec!["explain".to_string()];
                a.extend(mlp_common(out, w));
                a.extend(["--sigma".to_string(), "2".to_string()]);
                a
            }),
        ),
        (
            "evaluate",
            Box::new(|out: &str, w: &str| {
                let mut a = vec!["evaluate".to_string()];
                a.extend(mlp_common(out, w));
                a
            }),
        ),
        (
            "diagnose",
            Box::new(|out: &str, w: &str| {
                vec![
                    "diagnose".into(),
                    "--model".into(),
                    p("poly3.json"),
                    "--background".into(),
                    p("poly3_beta.csv"),
                    "--seed".into(),
                    "42".into(),
                    "--workers".into(),
                    w.into(),
                    "--output".into(),
                    out.into(),
                ]
            }),
        ),
        (
            "dump-table",
            Box::new(|out: &str, w: &str| {
                let mut a = vec!["dump-table".to_string(), "--dividends".to_string()];
                a.extend(mlp_common(out, w));
                a
            }),
        ),
    ] {
        let a = dir.path().join(format!("{name}-a.json")).display().to_string();
        let b = dir.path().join(format!("{name}-b.json")).display().to_string();
        let args_a = build(&a, "4");
        let args_b = build(&b, "2");
        run_cli(&args_a.iter().map(String::as_str).collect::<Vec<_>>())?;
        run_cli(&args_b.iter().map(String::as_str).collect::<Vec<_>>())?;
        let (ra, rb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        ensure(ra == rb, || format!("{name} reports differ"))?;
        checked.push(format!("{name} ({} bytes)", ra.len()));
    }
    Ok(checked.join(", "))
}

fn scale_ceiling() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().join("eval12.json");
    let start = Instant::now();
    run_cli(&[
        "evaluate",
        "--model",
        &demo("mlp12.json").display().to_string(),
        "--data",
        &demo("mlp12_data.csv").display().to_string(),
        "--background",
        &demo("mlp12_background.csv").display().to_string(),
        "--background-size",
        "32",
        "--label-col",
        "y",
        "--candidates",
        "16",
        "--seed",
        "0",
        "--output",
        &out.display().to_string(),
    ])?;
    let elapsed = start.elapsed();
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    ensure(report["config"]["rows"] == 100, || "expected 100 samples".into())?;
    ensure(elapsed < Duration::from_secs(600), || format!("took {elapsed:?}"))?;
    Ok(format!("d=12, 100 samples, B=32 in {:.1}s", elapsed.as_secs_f64()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 Shapley oracle equivalence", shapley_oracle),
        ("2 uniform TaylorPODA equals SHAP", uniform_taylorpoda_is_shap),
        ("3 zero discrepancy", zero_discrepancy),
        ("4 Mobius and Harsanyi identities", mobius_identities),
        ("5 optimizer dominance", optimizer_dominance),
        ("6 capped approximation limit", capped_limit),
        ("7 postulate matrix", postulate_matrix),
        ("8 CLI determinism", determinism),
        ("9 scale ceiling", scale_ceiling),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match std::panic::catch_unwind(check) {
            Ok(Ok(detail)) => println!("PASS criterion {name}: {detail}"),
            Ok(Err(detail)) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL criterion {name}: panicked");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
