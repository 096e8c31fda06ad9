use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};
use serde::Serialize;
use taylor_attr::pipeline::MetricKind;
use taylor_attr::{Method, Sigma};

#[derive(Parser, Debug)]
#[command(name = "taylor-attr", version, about = "Local feature attribution for black-box models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Attribute every row of a data file.
    Explain(ExplainArgs),
    /// Aggregate attribution-quality metrics over a data file.
    Evaluate(EvaluateArgs),
    /// Check allocation postulates on a polynomial model.
    Diagnose(DiagnoseArgs),
    /// Print the coalition value table for one row.
    DumpTable(DumpArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ModelArgs {
    /// Model description (JSON).
    #[arg(long)]
    pub model: PathBuf,
    /// Background CSV; defaults to the data file.
    #[arg(long)]
    pub background: Option<PathBuf>,
    /// Rows drawn from the background (default: min(32, rows)).
    #[arg(long)]
    pub background_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    #[serde(skip)]
    pub workers: Option<usize>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct MethodArgs {
    /// Data CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// occ1, shap, weightedshap, taylorpoda or lime; repeatable.
    #[arg(long = "method", action = ArgAction::Append)]
    pub methods: Vec<Method>,
    /// `full` or the largest interaction order to enumerate.
    #[arg(long, default_value = "full")]
    pub sigma: Sigma,
    /// Number of interaction allocations to search.
    #[arg(long, default_value_t = taylor_attr::allocation::DEFAULT_CANDIDATES)]
    pub candidates: usize,
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub include_uniform: bool,
    /// Column excluded from the features and used as the label.
    #[arg(long)]
    pub label_col: Option<String>,
    #[arg(long, default_value_t = taylor_attr::attribution::DEFAULT_LIME_SAMPLES)]
    pub lime_samples: usize,
}

#[derive(Args, Debug, Clone)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub run: MethodArgs,
    /// Write one SVG force plot per row and method into this directory.
    #[arg(long)]
    pub svg_dir: Option<PathBuf>,
    /// Include the selected interaction allocation for each row.
    #[arg(long)]
    pub dump_xi: bool,
}

#[derive(Args, Debug, Clone)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub run: MethodArgs,
    /// Comma-separated subset of aup,discrepancy,inclusion-mse,inclusion-auc.
    #[arg(long, value_delimiter = ',')]
    pub metrics: Vec<MetricKind>,
    /// Per-sample rows as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Instances to check; a seeded random battery is used when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long = "method", action = ArgAction::Append)]
    pub methods: Vec<Method>,
    #[arg(long, default_value_t = taylor_attr::allocation::DEFAULT_CANDIDATES)]
    pub candidates: usize,
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub include_uniform: bool,
    /// Size of the random battery.
    #[arg(long, default_value_t = 8)]
    pub battery: usize,
}

#[derive(Args, Debug, Clone)]
pub struct DumpArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub data: PathBuf,
    /// Zero-based data row.
    #[arg(long, default_value_t = 0)]
    pub row: usize,
    #[arg(long, default_value = "full")]
    pub sigma: Sigma,
    #[arg(long)]
    pub label_col: Option<String>,
    /// Also print Harsanyi dividends.
    #[arg(long)]
    pub dividends: bool,
}
