use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::coupling::CouplingParams;
use crate::error::{ConfigIssue, Error, Result};
use crate::model::families::{self, LinearParams, LogModulusParams, PolynomialParams};
use crate::model::{CoefficientSet, Hypothesis, SamplerSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Simulate,
    Couple,
    Irreducibility,
    Ergodicity,
    Check,
    Lemma21,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Simulate,
        ExperimentKind::Couple,
        ExperimentKind::Irreducibility,
        ExperimentKind::Ergodicity,
        ExperimentKind::Check,
        ExperimentKind::Lemma21,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Couple => "couple",
            ExperimentKind::Irreducibility => "irreducibility",
            ExperimentKind::Ergodicity => "ergodicity",
            ExperimentKind::Check => "check",
            ExperimentKind::Lemma21 => "lemma21",
        }
    }

    pub fn parse(s: &str) -> Option<ExperimentKind> {
        ExperimentKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

fn one() -> f64 {
    1.0
}
fn one_dim() -> usize {
    1
}

/// A built-in coefficient family with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ModelSpec {
    /// One-dimensional `dX = -theta X dt + sigma dW + jumps u ~ U[-1, 1]`.
    JumpOu {
        #[serde(default = "one")]
        theta: f64,
        #[serde(default = "one")]
        sigma: f64,
        #[serde(default = "one")]
        jump_rate: f64,
    },
    Linear {
        #[serde(default = "one_dim")]
        dim: usize,
        #[serde(default = "one")]
        theta: f64,
        #[serde(default = "one")]
        sigma: f64,
        #[serde(default = "one")]
        jump_rate: f64,
        #[serde(default = "one")]
        jump_scale: f64,
        #[serde(default)]
        jump_gain: f64,
    },
    Brownian {
        #[serde(default = "one_dim")]
        dim: usize,
    },
    /// `b(x) = -x|x|`, `sigma = 1`, `f(x, u) = u`.
    Superlinear {
        #[serde(default = "one")]
        jump_rate: f64,
    },
    Polynomial {
        #[serde(default = "one_dim")]
        dim: usize,
        #[serde(default)]
        theta: f64,
        #[serde(default = "one")]
        coefficient: f64,
        #[serde(default = "two")]
        power: f64,
        #[serde(default = "one")]
        sigma: f64,
        #[serde(default = "one")]
        jump_rate: f64,
        #[serde(default = "one")]
        jump_scale: f64,
    },
    LogModulus {
        #[serde(default = "one_dim")]
        dim: usize,
        #[serde(default = "one")]
        theta: f64,
        #[serde(default = "log_eps")]
        eps: f64,
        #[serde(default = "one")]
        sigma: f64,
        #[serde(default = "log_eta")]
        eta: f64,
        #[serde(default = "one")]
        c1: f64,
        #[serde(default = "one")]
        k: f64,
        #[serde(default = "two")]
        beta1: f64,
        #[serde(default = "one")]
        jump_rate: f64,
        #[serde(default = "half")]
        jump_scale: f64,
    },
}

fn two() -> f64 {
    2.0
}
fn half() -> f64 {
    0.5
}
fn log_eps() -> f64 {
    LogModulusParams::default().eps
}
fn log_eta() -> f64 {
    LogModulusParams::default().eta
}

impl ModelSpec {
    pub fn build(&self) -> Result<CoefficientSet> {
        match *self {
            ModelSpec::JumpOu { theta, sigma, jump_rate } => {
                families::linear(LinearParams::jump_ou(theta, sigma, jump_rate))
            }
            ModelSpec::Linear { dim, theta, sigma, jump_rate, jump_scale, jump_gain } => {
                families::linear(LinearParams { dim, theta, sigma, jump_rate, jump_scale, jump_gain })
            }
            ModelSpec::Brownian { dim } => families::brownian(dim),
            ModelSpec::Superlinear { jump_rate } => families::polynomial_drift(PolynomialParams::superlinear(jump_rate)),
            ModelSpec::Polynomial { dim, theta, coefficient, power, sigma, jump_rate, jump_scale } => {
                families::polynomial_drift(PolynomialParams { dim, theta, coefficient, power, sigma, jump_rate, jump_scale })
            }
            ModelSpec::LogModulus { dim, theta, eps, sigma, eta, c1, k, beta1, jump_rate, jump_scale } => {
                families::log_modulus_perturbed(LogModulusParams {
                    dim,
                    theta,
                    eps,
                    sigma,
                    eta,
                    c1,
                    k,
                    beta1,
                    jump_rate,
                    jump_scale,
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    #[serde(default)]
    pub checkpoints: Vec<f64>,
    /// Write every grid node instead of the checkpoints only.
    #[serde(default)]
    pub store_paths: bool,
}

fn default_alpha() -> f64 {
    0.5
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupleConfig {
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub delta: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Defaults to `delta * 1e-4`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub couple_eps: Option<f64>,
    #[serde(default = "yes")]
    pub glue: bool,
    #[serde(default = "yes")]
    pub bridge_detection: bool,
    /// Times at which `P(tau > t)` is reported, besides the horizon.
    #[serde(default)]
    pub tail_times: Vec<f64>,
    #[serde(default)]
    pub write_paths: bool,
}

impl CoupleConfig {
    pub fn params(&self) -> CouplingParams {
        CouplingParams {
            delta: self.delta,
            alpha: self.alpha,
            couple_eps: self.couple_eps.unwrap_or(self.delta * 1e-4),
            x0: self.x0.clone(),
            y0: self.y0.clone(),
            glue: self.glue,
            bridge_detection: self.bridge_detection,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrreducibilityConfig {
    pub x0: Vec<f64>,
    pub target: Vec<f64>,
    pub radius: f64,
    pub horizon: f64,
    pub n_paths: usize,
    /// Defaults to `horizon / 100`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Defaults to `0.9 horizon`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    /// Defaults to `10 (1 + |x0|)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<f64>,
    /// Calibrated from the model constants when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bihari_constant: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KbModeName {
    SinglePath,
    Ensemble,
}

fn default_bins() -> usize {
    100
}
fn default_coverage() -> f64 {
    0.999
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KbConfig {
    pub mode: KbModeName,
    pub horizon: f64,
    /// Defaults to the first start of the decay experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// Required in ensemble mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_paths: Option<usize>,
    /// Defaults to the step of the decay experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Defaults to `0.1 horizon`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_coverage")]
    pub coverage: f64,
    /// A fixed box `[lo, hi]^d` replaces the covering box when both are set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
}

fn default_knee() -> f64 {
    0.9
}
fn default_bootstrap() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    #[serde(default = "default_knee")]
    pub knee_fraction: f64,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    #[serde(default)]
    pub weighted: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { knee_fraction: default_knee(), bootstrap: default_bootstrap(), weighted: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicityConfig {
    /// Starting points of the decay curves.
    pub starts: Vec<Vec<f64>>,
    /// Decay curves are sampled at `0, step, 2 step, ..., horizon`.
    pub horizon: f64,
    pub step: f64,
    pub dt: f64,
    pub n_paths: usize,
    /// Also compare `E|X_t|^2` against the drift ODE bound.
    #[serde(default)]
    pub moments: bool,
    pub kb: KbConfig,
    #[serde(default)]
    pub fit: FitConfig,
}

impl ErgodicityConfig {
    pub fn times(&self) -> Vec<f64> {
        let n = (self.horizon / self.step + 1e-9).floor() as usize;
        (0..=n).map(|k| k as f64 * self.step).collect()
    }
}

fn all_hypotheses() -> Vec<String> {
    Hypothesis::ALL.iter().map(|h| h.name().to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckConfig {
    #[serde(default = "all_hypotheses")]
    pub hypotheses: Vec<String>,
    #[serde(default)]
    pub sampler: SamplerSpec,
}

impl CheckConfig {
    pub fn selected(&self) -> Vec<Hypothesis> {
        self.hypotheses.iter().filter_map(|h| Hypothesis::parse(h)).collect()
    }
}

fn default_pairs() -> usize {
    10_000
}
fn default_lambdas() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}
fn default_dims() -> Vec<usize> {
    vec![1, 2, 3, 4, 5]
}
fn default_upper() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma21Config {
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
    #[serde(default = "default_upper")]
    pub upper: f64,
}

impl Default for Lemma21Config {
    fn default() -> Self {
        Lemma21Config { pairs: default_pairs(), lambdas: default_lambdas(), dims: default_dims(), upper: default_upper() }
    }
}

/// A complete, validated experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Absent for `lemma21`, which does not simulate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub couple: Option<CoupleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub irreducibility: Option<IrreducibilityConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ergodicity: Option<ErgodicityConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<CheckConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemma21: Option<Lemma21Config>,
}

impl ExperimentConfig {
    /// Canonical TOML text; parsing it yields `self` again.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Usage(format!("cannot serialize config: {e}")))
    }

    pub fn model(&self) -> Result<CoefficientSet> {
        match &self.model {
            Some(m) => m.build(),
            None => Err(Error::Usage(format!("the {} experiment needs a [model] table", self.kind.name()))),
        }
    }
}

// ---------------------------------------------------------------- schema

#[derive(Clone, Copy, PartialEq)]
enum Ty {
    Float,
    UInt,
    Bool,
    Str(&'static [&'static str]),
    Floats,
    FloatRows,
    UInts,
    Strs(&'static [&'static str]),
    Table,
}

impl Ty {
    fn describe(self) -> &'static str {
        match self {
            Ty::Float => "a number",
            Ty::UInt => "a non-negative integer",
            Ty::Bool => "a boolean",
            Ty::Str(_) => "a string",
            Ty::Floats => "an array of numbers",
            Ty::FloatRows => "an array of arrays of numbers",
            Ty::UInts => "an array of non-negative integers",
            Ty::Strs(_) => "an array of strings",
            Ty::Table => "a table",
        }
    }
}

struct Key {
    name: &'static str,
    ty: Ty,
    required: bool,
}

const fn req(name: &'static str, ty: Ty) -> Key {
    Key { name, ty, required: true }
}
const fn opt(name: &'static str, ty: Ty) -> Key {
    Key { name, ty, required: false }
}

const KINDS: &[&str] = &["simulate", "couple", "irreducibility", "ergodicity", "check", "lemma21"];
const FAMILIES: &[&str] = &["jump-ou", "linear", "brownian", "superlinear", "polynomial", "log-modulus"];
const HYPOTHESES: &[&str] = &["H1", "H2", "H3", "Hf", "H1'", "Hf'", "Hbsf"];
const KB_MODES: &[&str] = &["single-path", "ensemble"];

const ROOT: &[Key] = &[
    req("kind", Ty::Str(KINDS)),
    req("seed", Ty::UInt),
    opt("out", Ty::Str(&[])),
    opt("threads", Ty::UInt),
    opt("model", Ty::Table),
    opt("simulate", Ty::Table),
    opt("couple", Ty::Table),
    opt("irreducibility", Ty::Table),
    opt("ergodicity", Ty::Table),
    opt("check", Ty::Table),
    opt("lemma21", Ty::Table),
];

fn model_keys(family: &str) -> Option<Vec<Key>> {
    let f = |n| opt(n, Ty::Float);
    let u = |n| opt(n, Ty::UInt);
    let mut keys = vec![req("family", Ty::Str(FAMILIES))];
    keys.extend(match family {
        "jump-ou" => vec![f("theta"), f("sigma"), f("jump_rate")],
        "linear" => vec![u("dim"), f("theta"), f("sigma"), f("jump_rate"), f("jump_scale"), f("jump_gain")],
        "brownian" => vec![u("dim")],
        "superlinear" => vec![f("jump_rate")],
        "polynomial" => {
            vec![u("dim"), f("theta"), f("coefficient"), f("power"), f("sigma"), f("jump_rate"), f("jump_scale")]
        }
        "log-modulus" => vec![
            u("dim"),
            f("theta"),
            f("eps"),
            f("sigma"),
            f("eta"),
            f("c1"),
            f("k"),
            f("beta1"),
            f("jump_rate"),
            f("jump_scale"),
        ],
        _ => return None,
    });
    Some(keys)
}

const SIMULATE: &[Key] = &[
    req("x0", Ty::Floats),
    req("horizon", Ty::Float),
    req("dt", Ty::Float),
    req("n_paths", Ty::UInt),
    opt("checkpoints", Ty::Floats),
    opt("store_paths", Ty::Bool),
];

const COUPLE: &[Key] = &[
    req("x0", Ty::Floats),
    req("y0", Ty::Floats),
    req("horizon", Ty::Float),
    req("dt", Ty::Float),
    req("n_paths", Ty::UInt),
    req("delta", Ty::Float),
    opt("alpha", Ty::Float),
    opt("couple_eps", Ty::Float),
    opt("glue", Ty::Bool),
    opt("bridge_detection", Ty::Bool),
    opt("tail_times", Ty::Floats),
    opt("write_paths", Ty::Bool),
];

const IRREDUCIBILITY: &[Key] = &[
    req("x0", Ty::Floats),
    req("target", Ty::Floats),
    req("radius", Ty::Float),
    req("horizon", Ty::Float),
    req("n_paths", Ty::UInt),
    opt("dt", Ty::Float),
    opt("t0", Ty::Float),
    opt("truncation", Ty::Float),
    opt("bihari_constant", Ty::Float),
];

const ERGODICITY: &[Key] = &[
    req("starts", Ty::FloatRows),
    req("horizon", Ty::Float),
    req("step", Ty::Float),
    req("dt", Ty::Float),
    req("n_paths", Ty::UInt),
    opt("moments", Ty::Bool),
    req("kb", Ty::Table),
    opt("fit", Ty::Table),
];

const KB: &[Key] = &[
    req("mode", Ty::Str(KB_MODES)),
    req("horizon", Ty::Float),
    opt("x0", Ty::Floats),
    opt("n_paths", Ty::UInt),
    opt("dt", Ty::Float),
    opt("burn_in", Ty::Float),
    opt("bins", Ty::UInt),
    opt("coverage", Ty::Float),
    opt("lo", Ty::Float),
    opt("hi", Ty::Float),
];

const FIT: &[Key] = &[opt("knee_fraction", Ty::Float), opt("bootstrap", Ty::UInt), opt("weighted", Ty::Bool)];

const CHECK: &[Key] = &[opt("hypotheses", Ty::Strs(HYPOTHESES)), opt("sampler", Ty::Table)];

const SAMPLER: &[Key] = &[
    opt("pairs", Ty::UInt),
    opt("near_diagonal", Ty::UInt),
    opt("radius", Ty::Float),
    opt("min_gap", Ty::Float),
    opt("marks", Ty::UInt),
    opt("moment_points", Ty::UInt),
    opt("pair_marks", Ty::UInt),
];

const LEMMA21: &[Key] = &[
    opt("pairs", Ty::UInt),
    opt("lambdas", Ty::Floats),
    opt("dims", Ty::UInts),
    opt("upper", Ty::Float),
];

/// Line numbers of keys and table headers in the source text.
struct Locator {
    lines: BTreeMap<String, usize>,
}

impl Locator {
    fn new(text: &str) -> Self {
        let mut lines = BTreeMap::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.starts_with('[') {
                let name = line.trim_start_matches('[').split(']').next().unwrap_or("");
                section = clean_path(name);
                lines.entry(section.clone()).or_insert(i + 1);
            } else if let Some((key, _)) = line.split_once('=') {
                if line.starts_with('#') {
                    continue;
                }
                let key = clean_path(key);
                let full = if section.is_empty() { key } else { format!("{section}.{key}") };
                lines.entry(full).or_insert(i + 1);
            }
        }
        Locator { lines }
    }

    fn line(&self, field: &str) -> Option<usize> {
        let mut f = field;
        loop {
            if let Some(&l) = self.lines.get(f) {
                return Some(l);
            }
            f = &f[..f.rfind('.')?];
        }
    }
}

fn clean_path(s: &str) -> String {
    s.split('.')
        .map(|p| p.trim().trim_matches('"').trim_matches('\''))
        .collect::<Vec<_>>()
        .join(".")
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

struct Checker<'a> {
    loc: &'a Locator,
    issues: Vec<ConfigIssue>,
}

impl Checker<'_> {
    fn issue(&mut self, field: impl Into<String>, message: impl Into<String>) {
        let field = field.into();
        let line = self.loc.line(&field);
        self.issues.push(ConfigIssue { field, line, message: message.into() });
    }

    /// Checks keys and types, converting integers to floats where a
    /// number is expected.
    fn table(&mut self, table: &mut Table, path: &str, keys: &[Key]) {
        let present: Vec<String> = table.keys().cloned().collect();
        for k in &present {
            let field = join(path, k);
            let Some(spec) = keys.iter().find(|s| s.name == k) else {
                let hint = closest(k, keys.iter().map(|s| s.name));
                let msg = match hint {
                    Some(h) => format!("unknown key `{k}` (did you mean `{h}`?)"),
                    None => format!("unknown key `{k}`"),
                };
                self.issue(field, msg);
                continue;
            };
            let v = table.get_mut(k.as_str()).expect("key present");
            if !conform(v, spec.ty) {
                let msg = match spec.ty {
                    Ty::Str(allowed) | Ty::Strs(allowed) if !allowed.is_empty() && matches!(v, Value::String(_) | Value::Array(_)) => {
                        format!("expected one of {}", allowed.iter().map(|a| format!("\"{a}\"")).collect::<Vec<_>>().join(", "))
                    }
                    ty => format!("expected {}, found {}", ty.describe(), v.type_str()),
                };
                self.issue(field, msg);
            }
        }
        for spec in keys.iter().filter(|s| s.required) {
            if !table.contains_key(spec.name) {
                self.issue(join(path, spec.name), format!("missing required key `{}`", spec.name));
            }
        }
    }

    fn sub(&mut self, parent: &mut Table, path: &str, key: &str, keys: &[Key]) {
        if let Some(Value::Table(t)) = parent.get_mut(key) {
            self.table(t, &join(path, key), keys);
        }
    }
}

fn conform(v: &mut Value, ty: Ty) -> bool {
    fn float(v: &mut Value) -> bool {
        match v {
            Value::Float(_) => true,
            Value::Integer(i) => {
                *v = Value::Float(*i as f64);
                true
            }
            _ => false,
        }
    }
    fn floats(v: &mut Value) -> bool {
        match v {
            Value::Array(a) => a.iter_mut().all(float),
            _ => false,
        }
    }
    match ty {
        Ty::Float => float(v),
        Ty::UInt => matches!(v, Value::Integer(i) if *i >= 0),
        Ty::Bool => v.is_bool(),
        Ty::Str(allowed) => matches!(v, Value::String(s) if allowed.is_empty() || allowed.contains(&s.as_str())),
        Ty::Floats => floats(v),
        Ty::FloatRows => match v {
            Value::Array(a) => a.iter_mut().all(floats),
            _ => false,
        },
        Ty::UInts => match v {
            Value::Array(a) => a.iter().all(|x| matches!(x, Value::Integer(i) if *i >= 0)),
            _ => false,
        },
        Ty::Strs(allowed) => match v {
            Value::Array(a) => a
                .iter()
                .all(|x| matches!(x, Value::String(s) if allowed.is_empty() || allowed.contains(&s.as_str()))),
            _ => false,
        },
        Ty::Table => v.is_table(),
    }
}

fn closest<'a>(key: &str, candidates: impl Iterator<Item = &'a str>) -> Option<&'a str> {
    candidates
        .map(|c| (edit_distance(key, c), c))
        .filter(|(d, _)| *d <= 2)
        .min_by_key(|(d, _)| *d)
        .map(|(_, c)| c)
}

fn edit_distance(a: &str, b: &str) -> usize {
    let b: Vec<char> = b.chars().collect();
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.chars().enumerate() {
        let mut prev = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let cur = row[j + 1];
            row[j + 1] = (prev + usize::from(ca != *cb)).min(row[j] + 1).min(cur + 1);
            prev = cur;
        }
    }
    row[b.len()]
}

// ---------------------------------------------------------------- ranges

fn positive(c: &mut Checker<'_>, field: &str, v: f64) {
    if !(v > 0.0 && v.is_finite()) {
        c.issue(field, format!("must be positive and finite, got {v}"));
    }
}

fn count(c: &mut Checker<'_>, field: &str, v: usize) {
    if v == 0 {
        c.issue(field, "must be at least 1");
    }
}

fn state(c: &mut Checker<'_>, field: &str, v: &[f64], dim: Option<usize>) {
    if v.iter().any(|x| !x.is_finite()) {
        c.issue(field, "entries must be finite");
    }
    if let Some(d) = dim {
        if v.len() != d {
            c.issue(field, format!("has {} entries but the model has dimension {d}", v.len()));
        }
    }
}

fn step(c: &mut Checker<'_>, section: &str, horizon: f64, dt: f64) {
    positive(c, &format!("{section}.horizon"), horizon);
    positive(c, &format!("{section}.dt"), dt);
    if dt > horizon {
        c.issue(format!("{section}.dt"), format!("exceeds the horizon {horizon}"));
    }
}

fn times_within(c: &mut Checker<'_>, field: &str, times: &[f64], horizon: f64) {
    if let Some(t) = times.iter().find(|t| !(**t >= 0.0 && **t <= horizon)) {
        c.issue(field, format!("{t} lies outside [0, {horizon}]"));
    }
}

fn parameter_issue(c: &mut Checker<'_>, section: &str, err: Error) {
    match err {
        Error::Parameter { name, reason } => c.issue(join(section, &name), reason),
        other => c.issue(section, other.to_string()),
    }
}

fn validate(cfg: &ExperimentConfig, c: &mut Checker<'_>) {
    if cfg.threads == Some(0) {
        c.issue("threads", "must be at least 1");
    }
    let dim = match (&cfg.model, cfg.kind) {
        (None, ExperimentKind::Lemma21) => None,
        (None, _) => {
            c.issue("model", "missing required table `[model]`");
            None
        }
        (Some(m), _) => match m.build() {
            Ok(set) => Some(set.dim()),
            Err(e) => {
                parameter_issue(c, "model", e);
                None
            }
        },
    };
    let kind = cfg.kind.name();
    let present = [
        ("simulate", cfg.simulate.is_some()),
        ("couple", cfg.couple.is_some()),
        ("irreducibility", cfg.irreducibility.is_some()),
        ("ergodicity", cfg.ergodicity.is_some()),
        ("check", cfg.check.is_some()),
        ("lemma21", cfg.lemma21.is_some()),
    ];
    for (name, here) in present {
        if here && name != kind {
            c.issue(name, format!("table `[{name}]` is not used by a `{kind}` experiment"));
        }
    }
    let needs_table = !matches!(cfg.kind, ExperimentKind::Check | ExperimentKind::Lemma21);
    if needs_table && !present.iter().any(|(n, here)| *n == kind && *here) {
        c.issue(kind, format!("missing required table `[{kind}]`"));
    }

    if let Some(s) = &cfg.simulate {
        state(c, "simulate.x0", &s.x0, dim);
        step(c, "simulate", s.horizon, s.dt);
        count(c, "simulate.n_paths", s.n_paths);
        times_within(c, "simulate.checkpoints", &s.checkpoints, s.horizon);
    }
    if let Some(s) = &cfg.couple {
        state(c, "couple.x0", &s.x0, dim);
        state(c, "couple.y0", &s.y0, dim);
        step(c, "couple", s.horizon, s.dt);
        count(c, "couple.n_paths", s.n_paths);
        times_within(c, "couple.tail_times", &s.tail_times, s.horizon);
        if let Err(e) = s.params().validate(s.x0.len()) {
            parameter_issue(c, "couple", e);
        }
    }
    if let Some(s) = &cfg.irreducibility {
        state(c, "irreducibility.x0", &s.x0, dim);
        state(c, "irreducibility.target", &s.target, dim);
        positive(c, "irreducibility.radius", s.radius);
        positive(c, "irreducibility.horizon", s.horizon);
        count(c, "irreducibility.n_paths", s.n_paths);
        if let Some(dt) = s.dt {
            step(c, "irreducibility", s.horizon, dt);
        }
        if let Some(t0) = s.t0 {
            if !(t0 >= 0.0 && t0 < s.horizon) {
                c.issue("irreducibility.t0", format!("must lie in [0, {})", s.horizon));
            }
        }
        if let Some(n) = s.truncation {
            if !(n >= 0.0 && n.is_finite()) {
                c.issue("irreducibility.truncation", "must be non-negative and finite");
            }
        }
        if let Some(k) = s.bihari_constant {
            positive(c, "irreducibility.bihari_constant", k);
        }
    }
    if let Some(s) = &cfg.ergodicity {
        if s.starts.is_empty() {
            c.issue("ergodicity.starts", "needs at least one starting point");
        }
        for x in &s.starts {
            state(c, "ergodicity.starts", x, dim);
        }
        step(c, "ergodicity", s.horizon, s.dt);
        positive(c, "ergodicity.step", s.step);
        if s.step < s.dt {
            c.issue("ergodicity.step", format!("is smaller than dt = {}", s.dt));
        }
        count(c, "ergodicity.n_paths", s.n_paths);
        let kb = &s.kb;
        if let Some(x) = &kb.x0 {
            state(c, "ergodicity.kb.x0", x, dim);
        }
        step(c, "ergodicity.kb", kb.horizon, kb.dt.unwrap_or(s.dt));
        if let Some(b) = kb.burn_in {
            if !(b >= 0.0 && b < kb.horizon) {
                c.issue("ergodicity.kb.burn_in", format!("must lie in [0, {})", kb.horizon));
            }
        }
        match (kb.mode, kb.n_paths) {
            (KbModeName::Ensemble, None) => c.issue("ergodicity.kb.n_paths", "is required in ensemble mode"),
            (KbModeName::Ensemble, Some(n)) => count(c, "ergodicity.kb.n_paths", n),
            (KbModeName::SinglePath, Some(_)) => c.issue("ergodicity.kb.n_paths", "is only used in ensemble mode"),
            _ => {}
        }
        count(c, "ergodicity.kb.bins", kb.bins);
        if !(kb.coverage > 0.0 && kb.coverage <= 1.0) {
            c.issue("ergodicity.kb.coverage", "must lie in (0, 1]");
        }
        match (kb.lo, kb.hi) {
            (Some(lo), Some(hi)) if !(lo < hi) => c.issue("ergodicity.kb.hi", "must exceed lo"),
            (Some(_), None) => c.issue("ergodicity.kb.hi", "is required when lo is set"),
            (None, Some(_)) => c.issue("ergodicity.kb.lo", "is required when hi is set"),
            _ => {}
        }
        if dim.is_some_and(|d| d > crate::ergodic::MAX_GRID_DIM) {
            c.issue("model", format!("histograms support dimension at most {}", crate::ergodic::MAX_GRID_DIM));
        }
        if !(s.fit.knee_fraction > 0.0 && s.fit.knee_fraction <= 1.0) {
            c.issue("ergodicity.fit.knee_fraction", "must lie in (0, 1]");
        }
    }
    if let Some(s) = &cfg.check {
        if s.hypotheses.is_empty() {
            c.issue("check.hypotheses", "needs at least one hypothesis");
        }
        if let Err(e) = s.sampler.validate() {
            parameter_issue(c, "check.sampler", e);
        }
    }
    if let Some(s) = &cfg.lemma21 {
        count(c, "lemma21.pairs", s.pairs);
        if s.lambdas.is_empty() || s.lambdas.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            c.issue("lemma21.lambdas", "needs at least one positive finite value");
        }
        if s.dims.is_empty() || s.dims.contains(&0) {
            c.issue("lemma21.dims", "needs at least one positive dimension");
        }
        let lmax = s.lambdas.iter().copied().fold(0.0, f64::max);
        if !(s.upper > lmax.sqrt() * (1.0 + 1e-3)) {
            c.issue("lemma21.upper", format!("must exceed sqrt(max lambda)(1 + 1e-3) = {}", lmax.sqrt() * (1.0 + 1e-3)));
        }
    }
}

/// Parses and validates an experiment config, reporting every problem
/// found rather than the first one.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let loc = Locator::new(text);
    let mut c = Checker { loc: &loc, issues: Vec::new() };
    let mut root: Table = match text.parse::<Table>() {
        Ok(t) => t,
        Err(e) => {
            let line = e.span().map(|s| text[..s.start.min(text.len())].lines().count().max(1));
            return Err(Error::Config(vec![ConfigIssue {
                field: String::new(),
                line,
                message: e.message().to_string(),
            }]));
        }
    };
    c.table(&mut root, "", ROOT);
    if let Some(Value::Table(model)) = root.get_mut("model") {
        let family = model.get("family").and_then(Value::as_str).unwrap_or("").to_string();
        match model_keys(&family) {
            Some(keys) => c.table(model, "model", &keys),
            None if model.contains_key("family") => {
                c.issue("model.family", format!("expected one of {}", FAMILIES.iter().map(|a| format!("\"{a}\"")).collect::<Vec<_>>().join(", ")))
            }
            None => c.issue("model.family", "missing required key `family`"),
        }
    }
    c.sub(&mut root, "", "simulate", SIMULATE);
    c.sub(&mut root, "", "couple", COUPLE);
    c.sub(&mut root, "", "irreducibility", IRREDUCIBILITY);
    c.sub(&mut root, "", "check", CHECK);
    if let Some(Value::Table(t)) = root.get_mut("check") {
        c.sub(t, "check", "sampler", SAMPLER);
    }
    c.sub(&mut root, "", "lemma21", LEMMA21);
    c.sub(&mut root, "", "ergodicity", ERGODICITY);
    if let Some(Value::Table(t)) = root.get_mut("ergodicity") {
        c.sub(t, "ergodicity", "kb", KB);
        c.sub(t, "ergodicity", "fit", FIT);
    }
    if !c.issues.is_empty() {
        return Err(Error::Config(c.issues));
    }
    let cfg: ExperimentConfig = Value::Table(root)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(vec![ConfigIssue { field: String::new(), line: None, message: e.message().to_string() }]))?;
    validate(&cfg, &mut c);
    if !c.issues.is_empty() {
        return Err(Error::Config(c.issues));
    }
    Ok(cfg)
}
