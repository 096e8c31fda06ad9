//! Prediction models treated as black boxes mapping a feature vector to one
//! scalar output.
//!
//! Three model families are supported: serialized multilayer perceptrons,
//! sparse polynomials (exact, used as an analytic reference), and external
//! processes that speak a newline-delimited JSON protocol over stdio.
//!
//! Taylor-term interpretations of attributions assume the model is
//! differentiable. Nothing here can verify that for an external oracle, so
//! every model is handled purely through its input/output behavior.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows per external request.
pub const MAX_EXTERNAL_BATCH: usize = 4096;
pub const DEFAULT_EXTERNAL_TIMEOUT: Duration = Duration::from_secs(30);

/// One input point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    names: Option<Vec<String>>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Dimension("feature vector must have at least one entry".into()));
        }
        check_finite(&values)?;
        Ok(Self { values, names: None })
    }

    pub fn with_names(values: Vec<f64>, names: Vec<String>) -> Result<Self> {
        if names.len() != values.len() {
            return Err(Error::Dimension(format!("{} names for {} values", names.len(), values.len())));
        }
        let mut v = Self::new(values)?;
        v.names = Some(names);
        Ok(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Feature names, falling back to `x0`, `x1`, ...
    pub fn display_names(&self) -> Vec<String> {
        match &self.names {
            Some(n) => n.clone(),
            None => (0..self.values.len()).map(|i| format!("x{i}")).collect(),
        }
    }
}

pub(crate) fn check_finite(values: &[f64]) -> Result<()> {
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput(format!("entry {pos} is {}", values[pos])));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputKind {
    Regression,
    Probability,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Tanh,
    Logistic,
    Relu,
    /// `ln(1 + exp(beta * z)) / beta`; approaches ReLU as `beta` grows.
    Softplus {
        beta: f64,
    },
    Identity,
}

impl Activation {
    fn parse(name: &str, softplus_beta: Option<f64>) -> Result<Self> {
        Ok(match name {
            "tanh" => Activation::Tanh,
            "logistic" | "sigmoid" => Activation::Logistic,
            "relu" => Activation::Relu,
            "softplus" => {
                let beta = softplus_beta.unwrap_or(1.0);
                if !(beta.is_finite() && beta > 0.0) {
                    return Err(Error::Parse(format!("softplus_beta must be positive, got {beta}")));
                }
                Activation::Softplus { beta }
            }
            "identity" | "linear" => Activation::Identity,
            other => return Err(Error::UnsupportedActivation(other.to_string())),
        })
    }

    fn name(&self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Logistic => "logistic",
            Activation::Relu => "relu",
            Activation::Softplus { .. } => "softplus",
            Activation::Identity => "identity",
        }
    }

    #[inline]
    fn apply(&self, z: f64) -> f64 {
        match *self {
            Activation::Tanh => z.tanh(),
            Activation::Logistic => logistic(z),
            Activation::Relu => z.max(0.0),
            Activation::Softplus { beta } => {
                let t = beta * z;
                if t > 30.0 {
                    z
                } else {
                    t.exp().ln_1p() / beta
                }
            }
            Activation::Identity => z,
        }
    }
}

#[inline]
fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// Row-major `outputs x inputs`.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn inputs(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn outputs(&self) -> usize {
        self.weights.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinalTransform {
    None,
    Logistic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    pub input_dim: usize,
    pub layers: Vec<Layer>,
    pub final_transform: FinalTransform,
}

impl MlpModel {
    pub fn new(input_dim: usize, layers: Vec<Layer>, final_transform: FinalTransform) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Dimension("input_dim must be positive".into()));
        }
        if layers.is_empty() {
            return Err(Error::Dimension("MLP needs at least one layer".into()));
        }
        let mut width = input_dim;
        for (k, layer) in layers.iter().enumerate() {
            if layer.outputs() == 0 {
                return Err(Error::Dimension(format!("layer {k} has no outputs")));
            }
            if layer.bias.len() != layer.outputs() {
                return Err(Error::Dimension(format!(
                    "layer {k}: {} bias entries for {} outputs",
                    layer.bias.len(),
                    layer.outputs()
                )));
            }
            for (r, row) in layer.weights.iter().enumerate() {
                if row.len() != width {
                    return Err(Error::Dimension(format!(
                        "layer {k} row {r} expects {} inputs but previous width is {width}",
                        row.len()
                    )));
                }
                check_finite(row).map_err(|e| Error::Parse(format!("layer {k}: {e}")))?;
            }
            check_finite(&layer.bias).map_err(|e| Error::Parse(format!("layer {k}: {e}")))?;
            width = layer.outputs();
        }
        if width != 1 {
            return Err(Error::Dimension(format!("last layer must produce a scalar, produces {width}")));
        }
        Ok(Self { input_dim, layers, final_transform })
    }

    fn forward(&self, x: &[f64]) -> f64 {
        let mut current = x.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            next.clear();
            next.extend(layer.weights.iter().zip(&layer.bias).map(|(row, b)| {
                let z = row.iter().zip(&current).fold(*b, |acc, (w, v)| acc + w * v);
                layer.activation.apply(z)
            }));
            std::mem::swap(&mut current, &mut next);
        }
        let out = current[0];
        match self.final_transform {
            FinalTransform::None => out,
            FinalTransform::Logistic => logistic(out),
        }
    }
}

/// `coef * prod_i x_i^{k_i}` with every `k_i >= 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub exps: BTreeMap<usize, u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolynomialModel {
    pub input_dim: usize,
    pub monomials: Vec<Monomial>,
}

impl PolynomialModel {
    pub fn new(input_dim: usize, monomials: Vec<Monomial>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Dimension("input_dim must be positive".into()));
        }
        for (k, m) in monomials.iter().enumerate() {
            if !m.coef.is_finite() {
                return Err(Error::Parse(format!("monomial {k} has non-finite coefficient")));
            }
            for (&var, &power) in &m.exps {
                if var >= input_dim {
                    return Err(Error::Dimension(format!(
                        "monomial {k} references feature {var} but input_dim is {input_dim}"
                    )));
                }
                if power == 0 {
                    return Err(Error::Parse(format!("monomial {k} has a zero exponent on feature {var}")));
                }
            }
        }
        Ok(Self { input_dim, monomials })
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.monomials.iter().map(|m| m.exps.iter().fold(m.coef, |acc, (&i, &k)| acc * x[i].powi(k as i32))).sum()
    }
}

struct Session {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
}

impl Drop for Session {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A model served by a child process. One request is in flight at a time.
pub struct ExternalModel {
    pub command: String,
    pub protocol_version: u32,
    /// Zero until bound when the model file leaves it out.
    pub input_dim: usize,
    pub timeout: Duration,
    session: Mutex<Option<Session>>,
}

impl ExternalModel {
    pub fn new(command: impl Into<String>, input_dim: usize, timeout: Duration) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Dimension("input_dim must be positive".into()));
        }
        Ok(Self { command: command.into(), protocol_version: 1, input_dim, timeout, session: Mutex::new(None) })
    }

    /// A model whose width is taken from the data it is first used with.
    fn unbound(command: String, timeout: Duration) -> Self {
        Self { command, protocol_version: 1, input_dim: 0, timeout, session: Mutex::new(None) }
    }

    fn spawn(&self) -> Result<Session> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Oracle(format!("failed to spawn `{}`: {e}", self.command)))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let reader = BufReader::new(stdout);
            for line in reader.lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        Ok(Session { child, stdin, lines: rx, next_id: 0 })
    }

    fn request(&self, session: &mut Session, rows: &[&[f64]]) -> Result<Vec<f64>> {
        let id = session.next_id;
        session.next_id += 1;
        let req = serde_json::json!({ "id": id, "inputs": rows });
        let mut line = serde_json::to_string(&req)?;
        line.push('\n');
        session
            .stdin
            .write_all(line.as_bytes())
            .and_then(|_| session.stdin.flush())
            .map_err(|e| Error::Oracle(format!("write to oracle failed: {e}")))?;

        let reply = match session.lines.recv_timeout(self.timeout) {
            Ok(Ok(l)) => l,
            Ok(Err(e)) => return Err(Error::Oracle(format!("read from oracle failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                return Err(Error::Oracle(format!("no response within {:?}", self.timeout)))
            }
            Err(RecvTimeoutError::Disconnected) => return Err(Error::Oracle("oracle closed its stdout".into())),
        };
        let resp: OracleResponse =
            serde_json::from_str(&reply).map_err(|e| Error::Oracle(format!("malformed response `{reply}`: {e}")))?;
        if resp.id != id {
            return Err(Error::Oracle(format!("response id {} does not match request id {id}", resp.id)));
        }
        if let Some(msg) = resp.error {
            return Err(Error::Oracle(msg));
        }
        let outputs = resp.outputs.ok_or_else(|| Error::Oracle("response carries neither outputs nor error".into()))?;
        if outputs.len() != rows.len() {
            return Err(Error::Oracle(format!("expected {} outputs, got {}", rows.len(), outputs.len())));
        }
        Ok(outputs)
    }

    fn evaluate_rows(&self, rows: &[&[f64]]) -> Result<Vec<f64>> {
        let mut guard = self.session.lock().unwrap_or_else(|p| p.into_inner());
        let mut out = Vec::with_capacity(rows.len());
        for chunk in rows.chunks(MAX_EXTERNAL_BATCH) {
            if guard.is_none() {
                *guard = Some(self.spawn()?);
            }
            let session = guard.as_mut().expect("session just spawned");
            match self.request(session, chunk) {
                Ok(v) => out.extend(v),
                Err(e) => {
                    // A failed exchange leaves the stream in an unknown state.
                    *guard = None;
                    return Err(e);
                }
            }
        }
        Ok(out)
    }
}

impl Clone for ExternalModel {
    fn clone(&self) -> Self {
        Self {
            command: self.command.clone(),
            protocol_version: self.protocol_version,
            input_dim: self.input_dim,
            timeout: self.timeout,
            session: Mutex::new(None),
        }
    }
}

impl fmt::Debug for ExternalModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExternalModel")
            .field("command", &self.command)
            .field("protocol_version", &self.protocol_version)
            .field("input_dim", &self.input_dim)
            .field("timeout", &self.timeout)
            .finish()
    }
}

#[derive(Deserialize)]
struct OracleResponse {
    id: u64,
    #[serde(default)]
    outputs: Option<Vec<f64>>,
    #[serde(default)]
    error: Option<String>,
}

#[derive(Clone, Debug)]
pub enum ModelVariant {
    Mlp(MlpModel),
    Polynomial(PolynomialModel),
    External(ExternalModel),
}

/// A validated prediction model.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub variant: ModelVariant,
    pub output_kind: OutputKind,
}

impl ModelSpec {
    pub fn mlp(model: MlpModel) -> Self {
        let output_kind = match model.final_transform {
            FinalTransform::Logistic => OutputKind::Probability,
            FinalTransform::None => OutputKind::Regression,
        };
        Self { variant: ModelVariant::Mlp(model), output_kind }
    }

    pub fn polynomial(model: PolynomialModel) -> Self {
        Self { variant: ModelVariant::Polynomial(model), output_kind: OutputKind::Regression }
    }

    pub fn external(model: ExternalModel) -> Self {
        Self { variant: ModelVariant::External(model), output_kind: OutputKind::Regression }
    }

    pub fn input_dim(&self) -> usize {
        match &self.variant {
            ModelVariant::Mlp(m) => m.input_dim,
            ModelVariant::Polynomial(p) => p.input_dim,
            ModelVariant::External(e) => e.input_dim,
        }
    }

    /// Fixes the width of an external model declared without `input_dim`;
    /// for every other model checks that `d` matches.
    pub fn bind_input_dim(&mut self, d: usize) -> Result<()> {
        if let ModelVariant::External(e) = &mut self.variant {
            if e.input_dim == 0 && d > 0 {
                e.input_dim = d;
            }
        }
        if self.input_dim() != d {
            return Err(Error::Dimension(format!("model expects {} features, data has {d}", self.input_dim())));
        }
        Ok(())
    }

    pub fn as_polynomial(&self) -> Option<&PolynomialModel> {
        match &self.variant {
            ModelVariant::Polynomial(p) => Some(p),
            _ => None,
        }
    }

    pub fn is_external(&self) -> bool {
        matches!(self.variant, ModelVariant::External(_))
    }

    pub fn kind_name(&self) -> &'static str {
        match self.variant {
            ModelVariant::Mlp(_) => "mlp",
            ModelVariant::Polynomial(_) => "polynomial",
            ModelVariant::External(_) => "external",
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s)?;
        file.into_spec()
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        ModelFile::from_spec(self).to_value()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if self.input_dim() == 0 {
            return Err(Error::Config("external model has no input_dim; bind it to the data first".into()));
        }
        if x.len() != self.input_dim() {
            return Err(Error::Dimension(format!("model expects {} features, got {}", self.input_dim(), x.len())));
        }
        check_finite(x)
    }

    fn check_output(&self, y: f64) -> Result<f64> {
        if !y.is_finite() {
            return Err(Error::NonFiniteOutput(y));
        }
        if self.output_kind == OutputKind::Probability && !(0.0..=1.0).contains(&y) {
            log::warn!("probability model returned {y}, outside [0, 1]");
        }
        Ok(y)
    }

    fn eval_unchecked(&self, x: &[f64]) -> f64 {
        match &self.variant {
            ModelVariant::Mlp(m) => m.forward(x),
            ModelVariant::Polynomial(p) => p.eval(x),
            ModelVariant::External(_) => unreachable!("external models evaluate in batches"),
        }
    }
}

/// Reads and validates a model file.
pub fn load_model(path: impl AsRef<Path>) -> Result<ModelSpec> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    ModelSpec::from_json_str(&text)
}

pub fn evaluate(model: &ModelSpec, x: &FeatureVector) -> Result<f64> {
    evaluate_slice(model, x.values())
}

pub fn evaluate_slice(model: &ModelSpec, x: &[f64]) -> Result<f64> {
    model.check_input(x)?;
    match &model.variant {
        ModelVariant::External(e) => model.check_output(e.evaluate_rows(&[x])?[0]),
        _ => model.check_output(model.eval_unchecked(x)),
    }
}

pub fn evaluate_batch(model: &ModelSpec, xs: &[FeatureVector]) -> Result<Vec<f64>> {
    let rows: Vec<&[f64]> = xs.iter().map(FeatureVector::values).collect();
    evaluate_rows(model, &rows)
}

/// Every row is validated before anything is evaluated.
pub fn evaluate_rows(model: &ModelSpec, rows: &[&[f64]]) -> Result<Vec<f64>> {
    for row in rows {
        model.check_input(row)?;
    }
    let raw = match &model.variant {
        ModelVariant::External(e) => e.evaluate_rows(rows)?,
        _ => rows.iter().map(|r| model.eval_unchecked(r)).collect(),
    };
    raw.into_iter().map(|y| model.check_output(y)).collect()
}

// On-disk representation.

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum ModelFile {
    Mlp {
        input_dim: usize,
        layers: Vec<LayerFile>,
        #[serde(default = "default_transform")]
        final_transform: FinalTransform,
    },
    Polynomial {
        input_dim: usize,
        monomials: Vec<MonomialFile>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        output_kind: Option<OutputKind>,
    },
    External {
        command: String,
        protocol_version: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        input_dim: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        timeout_ms: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        output_kind: Option<OutputKind>,
    },
}

fn default_transform() -> FinalTransform {
    FinalTransform::None
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    activation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    softplus_beta: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct MonomialFile {
    coef: f64,
    #[serde(default)]
    exps: BTreeMap<String, u32>,
}

impl ModelFile {
    fn into_spec(self) -> Result<ModelSpec> {
        match self {
            ModelFile::Mlp { input_dim, layers, final_transform } => {
                let layers = layers
                    .into_iter()
                    .map(|l| {
                        Ok(Layer {
                            activation: Activation::parse(&l.activation, l.softplus_beta)?,
                            weights: l.weights,
                            bias: l.bias,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(ModelSpec::mlp(MlpModel::new(input_dim, layers, final_transform)?))
            }
            ModelFile::Polynomial { input_dim, monomials, output_kind } => {
                let monomials = monomials
                    .into_iter()
                    .map(|m| {
                        let exps = m
                            .exps
                            .into_iter()
                            .map(|(k, p)| {
                                k.parse::<usize>()
                                    .map(|i| (i, p))
                                    .map_err(|_| Error::Parse(format!("exponent key `{k}` is not a feature index")))
                            })
                            .collect::<Result<BTreeMap<_, _>>>()?;
                        Ok(Monomial { coef: m.coef, exps })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mut spec = ModelSpec::polynomial(PolynomialModel::new(input_dim, monomials)?);
                if let Some(kind) = output_kind {
                    spec.output_kind = kind;
                }
                Ok(spec)
            }
            ModelFile::External { command, protocol_version, input_dim, timeout_ms, output_kind } => {
                if protocol_version != 1 {
                    return Err(Error::Parse(format!("unsupported protocol_version {protocol_version}")));
                }
                let timeout = timeout_ms.map_or(DEFAULT_EXTERNAL_TIMEOUT, Duration::from_millis);
                let model = match input_dim {
                    Some(d) => ExternalModel::new(command, d, timeout)?,
                    None => ExternalModel::unbound(command, timeout),
                };
                let mut spec = ModelSpec::external(model);
                if let Some(kind) = output_kind {
                    spec.output_kind = kind;
                }
                Ok(spec)
            }
        }
    }

    fn from_spec(spec: &ModelSpec) -> Self {
        match &spec.variant {
            ModelVariant::Mlp(m) => ModelFile::Mlp {
                input_dim: m.input_dim,
                layers: m
                    .layers
                    .iter()
                    .map(|l| LayerFile {
                        weights: l.weights.clone(),
                        bias: l.bias.clone(),
                        activation: l.activation.name().to_string(),
                        softplus_beta: match l.activation {
                            Activation::Softplus { beta } => Some(beta),
                            _ => None,
                        },
                    })
                    .collect(),
                final_transform: m.final_transform,
            },
            ModelVariant::Polynomial(p) => ModelFile::Polynomial {
                input_dim: p.input_dim,
                monomials: p
                    .monomials
                    .iter()
                    .map(|m| MonomialFile {
                        coef: m.coef,
                        exps: m.exps.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
                    })
                    .collect(),
                output_kind: Some(spec.output_kind),
            },
            ModelVariant::External(e) => ModelFile::External {
                command: e.command.clone(),
                protocol_version: e.protocol_version,
                input_dim: (e.input_dim > 0).then_some(e.input_dim),
                timeout_ms: Some(e.timeout.as_millis() as u64),
                output_kind: Some(spec.output_kind),
            },
        }
    }

    fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("model file serializes")
    }
}
