use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use taylor_attr::allocation::CandidateConfig;
use taylor_attr::data::read_labeled_csv;
use taylor_attr::dividends::harsanyi_all;
use taylor_attr::masking::MASKING_ESTIMATOR;
use taylor_attr::pipeline::{
    diagnose as run_diagnosis, evaluate_explanations, explain_all, ExplainOptions, MetricKind,
};
use taylor_attr::{
    build_table, load_model, BackgroundSet, Error, FeatureVector, LimeConfig, Method, ModelSpec, Result, Sigma,
    ENGINE_NAME, ENGINE_VERSION,
};

use crate::args::{DiagnoseArgs, DumpArgs, EvaluateArgs, ExplainArgs, MethodArgs, ModelArgs};

const DEFAULT_BACKGROUND_SIZE: usize = taylor_attr::masking::DEFAULT_BACKGROUND_SIZE;

struct Loaded {
    model: ModelSpec,
    rows: Vec<FeatureVector>,
    labels: Option<Vec<f64>>,
    bg: BackgroundSet,
    bg_source: String,
}

fn load(args: &ModelArgs, data: &Path, label: Option<&str>) -> Result<Loaded> {
    let mut model = load_model(&args.model)?;
    let table = read_labeled_csv(data, label)?;
    model.bind_input_dim(table.names.len())?;
    let d = model.input_dim();
    let rows = table
        .rows
        .into_iter()
        .map(|r| FeatureVector::with_names(r, table.names.clone()))
        .collect::<Result<Vec<_>>>()?;
    let skip: Vec<&str> = label.into_iter().collect();
    let (full_bg, bg_source) = match &args.background {
        Some(p) => (BackgroundSet::from_csv(p, &skip)?, p.display().to_string()),
        None => (BackgroundSet::new(rows.iter().map(|r| r.values().to_vec()).collect(), "data")?, "data".into()),
    };
    let bg = resize_background(full_bg, args.background_size, args.seed)?;
    if bg.dim() != d {
        return Err(Error::Dimension(format!("background has {} columns, model expects {d}", bg.dim())));
    }
    Ok(Loaded { model, rows, labels: table.labels, bg, bg_source })
}

fn resize_background(bg: BackgroundSet, size: Option<usize>, seed: u64) -> Result<BackgroundSet> {
    let available = bg.len();
    let size = match size {
        Some(0) => return Err(Error::Config("background size must be positive".into())),
        Some(b) if b > available => {
            return Err(Error::Config(format!("background size {b} exceeds the {available} available rows")))
        }
        Some(b) => b,
        None => available.min(DEFAULT_BACKGROUND_SIZE),
    };
    if size == available {
        Ok(bg)
    } else {
        bg.subsample(size, seed)
    }
}

fn resolve_sigma(sigma: Sigma, d: usize) -> Result<Sigma> {
    match sigma {
        Sigma::Capped(0) => Err(Error::Config("sigma must be at least 1".into())),
        Sigma::Capped(k) if k > d => Err(Error::Config(format!("sigma {k} exceeds the {d} features"))),
        Sigma::Capped(k) if k == d => Ok(Sigma::Full),
        s => Ok(s),
    }
}

fn resolve_methods(requested: &[Method], sigma: Sigma) -> Result<Vec<Method>> {
    let capped = sigma != Sigma::Full;
    let mut methods = if requested.is_empty() {
        if capped {
            vec![Method::Occ1, Method::TaylorPoda, Method::Lime]
        } else {
            Method::ALL.to_vec()
        }
    } else {
        requested.to_vec()
    };
    let mut seen = Vec::new();
    methods.retain(|m| {
        let fresh = !seen.contains(m);
        seen.push(*m);
        fresh
    });
    if capped {
        if let Some(m) = methods.iter().find(|m| matches!(m, Method::Shap | Method::WeightedShap)) {
            return Err(Error::Config(format!("{} needs the full coalition table; drop --sigma", m.id())));
        }
    }
    Ok(methods)
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    match workers {
        Some(0) => return Err(Error::Config("--workers must be positive".into())),
        Some(n) => builder = builder.num_threads(n),
        None => {}
    }
    builder.build().map_err(|e| Error::Config(format!("worker pool: {e}")))
}

fn options(run: &MethodArgs, d: usize) -> Result<ExplainOptions> {
    let sigma = resolve_sigma(run.sigma, d)?;
    if run.candidates == 0 {
        return Err(Error::Config("--candidates must be positive".into()));
    }
    Ok(ExplainOptions {
        methods: resolve_methods(&run.methods, sigma)?,
        sigma,
        n_candidates: run.candidates,
        include_uniform: run.include_uniform,
        lime: LimeConfig { n_samples: run.lime_samples, ..LimeConfig::default() },
        ..ExplainOptions::default()
    })
}

fn header(command: &str, seed: u64, config: Value) -> serde_json::Map<String, Value> {
    let mut map = serde_json::Map::new();
    map.insert("engine".into(), json!({ "name": ENGINE_NAME, "version": ENGINE_VERSION }));
    map.insert("command".into(), json!(command));
    map.insert("masking_estimator".into(), json!(MASKING_ESTIMATOR));
    map.insert("seed".into(), json!(seed));
    map.insert("config".into(), config);
    map
}

fn run_config(model: &ModelArgs, run: &MethodArgs, loaded: &Loaded, opts: &ExplainOptions) -> Value {
    json!({
        "model": model.model.display().to_string(),
        "data": run.data.display().to_string(),
        "background": loaded.bg_source,
        "background_size": loaded.bg.len(),
        "methods": opts.methods,
        "sigma": opts.sigma,
        "n_candidates": opts.n_candidates,
        "include_uniform": opts.include_uniform,
        "dirichlet_alpha": opts.alpha,
        "label_col": run.label_col,
        "lime_samples": opts.lime.n_samples,
        "rows": loaded.rows.len(),
    })
}

fn write_report(output: Option<&Path>, report: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    match output {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn explain(args: &ExplainArgs) -> Result<()> {
    let loaded = load(&args.model, &args.run.data, args.run.label_col.as_deref())?;
    let mut opts = options(&args.run, loaded.model.input_dim())?;
    opts.dump_xi = args.dump_xi;
    let seed = args.model.seed;
    let explained =
        pool(args.model.workers)?.install(|| explain_all(&loaded.model, &loaded.rows, &loaded.bg, &opts, seed))?;

    if let Some(dir) = &args.svg_dir {
        fs::create_dir_all(dir)?;
        for (exp, _) in &explained {
            for plot in &exp.force_plots {
                fs::write(dir.join(format!("row{:04}_{}.svg", exp.sample, plot.method.id())), plot.to_svg())?;
            }
        }
    }

    let mut report = header("explain", seed, run_config(&args.model, &args.run, &loaded, &opts));
    let instances: Vec<_> = explained.into_iter().map(|(e, _)| e).collect();
    report.insert("instances".into(), serde_json::to_value(instances)?);
    write_report(args.model.output.as_deref(), &Value::Object(report))
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let loaded = load(&args.model, &args.run.data, args.run.label_col.as_deref())?;
    let opts = options(&args.run, loaded.model.input_dim())?;
    if loaded.rows.len() < 2 {
        return Err(Error::InsufficientSamples(loaded.rows.len()));
    }
    let metrics = if args.metrics.is_empty() {
        let mut m = vec![MetricKind::Aup, MetricKind::Discrepancy, MetricKind::InclusionMse];
        if loaded.labels.is_some() {
            m.push(MetricKind::InclusionAuc);
        }
        m
    } else {
        args.metrics.clone()
    };
    if metrics.contains(&MetricKind::InclusionAuc) && loaded.labels.is_none() {
        return Err(Error::Config("inclusion-auc needs --label-col".into()));
    }
    let seed = args.model.seed;
    let metric_report = pool(args.model.workers)?.install(|| {
        let explained = explain_all(&loaded.model, &loaded.rows, &loaded.bg, &opts, seed)?;
        evaluate_explanations(&explained, loaded.labels.as_deref(), &metrics)
    })?;

    if let Some(path) = &args.csv {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Config(e.to_string()))?;
        w.write_record(["sample", "method", "aup", "discrepancy"]).map_err(|e| Error::Config(e.to_string()))?;
        for row in &metric_report.per_sample {
            w.write_record([
                row.sample.to_string(),
                row.method.id().to_string(),
                row.aup.to_string(),
                row.discrepancy.to_string(),
            ])
            .map_err(|e| Error::Config(e.to_string()))?;
        }
        w.flush()?;
    }

    let summary: Vec<Value> = opts
        .methods
        .iter()
        .map(|m| {
            let mut row = serde_json::Map::new();
            row.insert("method".into(), json!(m.label()));
            for (name, agg) in &metric_report.aggregates[m.id()] {
                row.insert(name.clone(), json!(agg.to_string()));
            }
            if let Some(scalars) = metric_report.dataset_metrics.get(m.id()) {
                for (name, v) in scalars {
                    row.insert(name.clone(), json!(v));
                }
            }
            Value::Object(row)
        })
        .collect();

    let mut config = run_config(&args.model, &args.run, &loaded, &opts);
    config["metrics"] = json!(metrics);
    let mut report = header("evaluate", seed, config);
    report.insert("summary".into(), json!(summary));
    report.insert("report".into(), serde_json::to_value(&metric_report)?);
    if args.model.output.is_some() {
        print!("{}", summary_table(&summary));
    }
    write_report(args.model.output.as_deref(), &Value::Object(report))
}

fn summary_table(rows: &[Value]) -> String {
    let cols = ["aup", "discrepancy", "abs_discrepancy", "inclusion_mse", "inclusion_auc"];
    let mut out = format!("{:<14}", "method");
    for c in cols {
        let _ = write!(out, "  {c:<28}");
    }
    out.push('\n');
    for row in rows {
        let _ = write!(out, "{:<14}", row["method"].as_str().unwrap_or(""));
        for c in cols {
            let cell = match &row[c] {
                Value::String(s) => s.clone(),
                Value::Number(n) => format!("{:.4}", n.as_f64().unwrap_or(f64::NAN)),
                _ => "-".into(),
            };
            let _ = write!(out, "  {cell:<28}");
        }
        out.push('\n');
    }
    out
}

pub fn diagnose(args: &DiagnoseArgs) -> Result<()> {
    let model = load_model(&args.model.model)?;
    let d = model.input_dim();
    if model.as_polynomial().is_none() {
        return Err(Error::NotPolynomial);
    }
    let (bg, bg_source) = match &args.model.background {
        Some(p) => (BackgroundSet::from_csv(p, &[])?, p.display().to_string()),
        None => (BackgroundSet::single(vec![0.0; d])?, "zeros".to_string()),
    };
    if bg.len() != 1 {
        return Err(Error::BackgroundNotSingleRow(bg.len()));
    }
    if bg.dim() != d {
        return Err(Error::Dimension(format!("background has {} columns, model expects {d}", bg.dim())));
    }
    let seed = args.model.seed;
    let instances = match &args.data {
        Some(p) => {
            let t = read_labeled_csv(p, None)?;
            t.rows.into_iter().map(|r| FeatureVector::with_names(r, t.names.clone())).collect::<Result<Vec<_>>>()?
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..args.battery)
                .map(|_| FeatureVector::new((0..d).map(|_| rng.random_range(-2.0..2.0)).collect()))
                .collect::<Result<Vec<_>>>()?
        }
    };
    let methods = if args.methods.is_empty() { Method::ALL.to_vec() } else { args.methods.clone() };
    let candidates = CandidateConfig {
        n_candidates: args.candidates,
        include_uniform: args.include_uniform,
        seed,
        ..CandidateConfig::default()
    };
    let diagnosis =
        pool(args.model.workers)?.install(|| run_diagnosis(&model, &instances, &bg, &methods, &candidates))?;

    let mut table = format!(
        "{:<14}  {:<9}  {:<10}  {:<16}  {:<10}\n",
        "method", "precision", "federation", "zero-discrepancy", "adaptation"
    );
    let matrix: Vec<Value> = diagnosis
        .rows
        .iter()
        .map(|r| {
            let [p, f, z, a] = r.marks();
            let _ = writeln!(table, "{:<14}  {p:<9}  {f:<10}  {z:<16}  {a:<10}", r.method.label());
            json!({
                "method": r.method.label(),
                "precision": p,
                "federation": f,
                "zero_discrepancy": z,
                "adaptation": a,
            })
        })
        .collect();
    let note = diagnosis
        .interaction_free
        .then_some("no interaction terms at any instance; methods differ only in how they scale independent effects");
    if let Some(n) = note {
        let _ = writeln!(table, "note: {n}");
    }

    let config = json!({
        "model": args.model.model.display().to_string(),
        "data": args.data.as_ref().map(|p| p.display().to_string()),
        "background": bg_source,
        "battery": if args.data.is_some() { Value::Null } else { json!(args.battery) },
        "methods": methods,
        "n_candidates": args.candidates,
        "include_uniform": args.include_uniform,
    });
    let mut report = header("diagnose", seed, config);
    report.insert("instances".into(), json!(diagnosis.instances));
    report.insert("matrix".into(), json!(matrix));
    report.insert("note".into(), json!(note));
    if args.model.output.is_some() {
        print!("{table}");
    }
    write_report(args.model.output.as_deref(), &Value::Object(report))
}

pub fn dump_table(args: &DumpArgs) -> Result<()> {
    let loaded = load(&args.model, &args.data, args.label_col.as_deref())?;
    let d = loaded.model.input_dim();
    let sigma = resolve_sigma(args.sigma, d)?;
    let x = loaded
        .rows
        .get(args.row)
        .ok_or_else(|| Error::Config(format!("row {} out of range ({} rows)", args.row, loaded.rows.len())))?;
    let table = build_table(&loaded.model, x, &loaded.bg, sigma)?;

    let config = json!({
        "model": args.model.model.display().to_string(),
        "data": args.data.display().to_string(),
        "background": loaded.bg_source,
        "background_size": loaded.bg.len(),
        "row": args.row,
        "sigma": sigma,
    });
    let mut report = header("dump-table", args.model.seed, config);
    report.insert("features".into(), json!(x.display_names()));
    report.insert("values".into(), json!(x.values()));
    report.insert("table".into(), table.to_dump_json());
    if args.dividends {
        report.insert("dividends".into(), harsanyi_all(&table)?.to_dump_json());
    }
    write_report(args.model.output.as_deref(), &Value::Object(report))
}
