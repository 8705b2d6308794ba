//! Run configuration: a TOML file flattened to dotted keys, checked against a
//! registry of known keys, with `key=value` overrides on top.
//!
//! ```toml
//! [problem]
//! kind = "noisy-least-squares"
//! batch_size = 1
//!
//! [optimizer]
//! algorithm = "accel-sgd"
//! lr = 0.001
//!
//! [sweep.grid]
//! "optimizer.lr" = [0.001, 0.01]
//! ```
//!
//! Unset keys take the registry default. Keys without a default are optional
//! and documented as derived from other keys.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::Serialize;

use crate::equivalence::{Check, CheckSetup, LegacyForm, Mapping};
use crate::error::{Error, Result};
use crate::harness::RunSpec;
use crate::optimizers::{Algorithm, OptimizerConfig};
use crate::problems::{Family, NoiseModel, ProblemSpec};
use crate::schedules::{AlphaSchedule, AveragingSchedule, LearningRateSchedule, MomentumSchedule};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    List(Vec<Value>),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x:?}"),
            Value::Str(s) => write!(f, "{s:?}"),
            Value::List(items) => {
                f.write_str("[")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
        }
    }
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Float(x) => Some(x),
            Value::Int(i) => Some(i as f64),
            _ => None,
        }
    }

    fn from_toml(key: &str, v: toml::Value) -> Result<Self> {
        Ok(match v {
            toml::Value::Boolean(b) => Value::Bool(b),
            toml::Value::Integer(i) => Value::Int(i),
            toml::Value::Float(x) => Value::Float(x),
            toml::Value::String(s) => Value::Str(s),
            toml::Value::Array(items) => Value::List(
                items
                    .into_iter()
                    .map(|v| match v {
                        toml::Value::Array(_) | toml::Value::Table(_) => {
                            Err(Error::config(key, "nested lists are not supported"))
                        }
                        v => Value::from_toml(key, v),
                    })
                    .collect::<Result<_>>()?,
            ),
            toml::Value::Datetime(_) | toml::Value::Table(_) => {
                return Err(Error::config(
                    key,
                    "expected a number, boolean, string or list",
                ))
            }
        })
    }

    /// Parses the right-hand side of `key=value`: TOML literal syntax, with
    /// bare words read as strings.
    pub(crate) fn parse_literal(key: &str, text: &str) -> Result<Self> {
        let text = text.trim();
        match toml::from_str::<toml::Table>(&format!("v = {text}")) {
            Ok(mut t) => Value::from_toml(key, t.remove("v").expect("parsed key")),
            Err(_) => Ok(Value::Str(text.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kind {
    Float,
    Int,
    Bool,
    Str,
    FloatList,
    IntList,
    StrList,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Float => "float",
            Kind::Int => "int",
            Kind::Bool => "bool",
            Kind::Str => "string",
            Kind::FloatList => "float list",
            Kind::IntList => "int list",
            Kind::StrList => "string list",
        }
    }

    fn element(self) -> Option<Kind> {
        match self {
            Kind::FloatList => Some(Kind::Float),
            Kind::IntList => Some(Kind::Int),
            Kind::StrList => Some(Kind::Str),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Range {
    Any,
    /// `>= 0`.
    NonNegative,
    /// `> 0`.
    Positive,
    /// `[0, 1)`.
    Unit,
    /// `[0, 1]`.
    UnitClosed,
    /// `(0, 1]`.
    UnitOpenLeft,
    Choices(&'static [&'static str]),
}

impl fmt::Display for Range {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Range::Any => f.write_str("any"),
            Range::NonNegative => f.write_str(">= 0"),
            Range::Positive => f.write_str("> 0"),
            Range::Unit => f.write_str("[0, 1)"),
            Range::UnitClosed => f.write_str("[0, 1]"),
            Range::UnitOpenLeft => f.write_str("(0, 1]"),
            Range::Choices(c) => f.write_str(&c.join(" | ")),
        }
    }
}

impl Range {
    fn check(self, v: &Value) -> std::result::Result<(), String> {
        if let Range::Choices(choices) = self {
            return match v {
                Value::Str(s) if choices.contains(&s.as_str()) => Ok(()),
                _ => Err(format!("expected one of {}, got {v}", choices.join(", "))),
            };
        }
        let Some(x) = v.as_f64() else { return Ok(()) };
        let ok = x.is_finite()
            && match self {
                Range::Any => true,
                Range::NonNegative => x >= 0.0,
                Range::Positive => x > 0.0,
                Range::Unit => (0.0..1.0).contains(&x),
                Range::UnitClosed => (0.0..=1.0).contains(&x),
                Range::UnitOpenLeft => x > 0.0 && x <= 1.0,
                Range::Choices(_) => unreachable!(),
            };
        if ok {
            Ok(())
        } else {
            Err(format!("value {v} outside range {self}"))
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct KeyDef {
    pub key: &'static str,
    pub kind: Kind,
    /// TOML literal, or `None` for optional keys.
    pub default: Option<&'static str>,
    pub range: Range,
    pub doc: &'static str,
}

const fn key(
    key: &'static str,
    kind: Kind,
    default: Option<&'static str>,
    range: Range,
    doc: &'static str,
) -> KeyDef {
    KeyDef {
        key,
        kind,
        default,
        range,
        doc,
    }
}

const PROBLEM_KINDS: &[&str] = &["quadratic", "noisy-least-squares", "logistic", "mlp"];
const NOISE_MODELS: &[&str] = &["none", "minibatch", "gaussian"];
const ALGORITHMS: &[&str] = &[
    "sgd-momentum",
    "accel-sgd",
    "schedule-free-sgd",
    "adamw",
    "laprop",
    "schedule-free-adamw",
    "lion",
    "mars-approx",
    "ademamix",
    "simplified-ademamix",
    "accel-adam-avg",
];
const LR_SCHEDULES: &[&str] = &["constant", "cosine"];
const MOMENTUM_SCHEDULES: &[&str] = &["constant", "one-minus-k-over-t", "half-life-warmup"];
const AVERAGING: &[&str] = &["tailed", "uniform", "as-written-max"];
const MAPPINGS: &[&str] = &[
    "schedule-free",
    "agnes",
    "asgd-jain",
    "mass",
    "nesterov",
    "ademamix-simplified",
    "mars-rewrite",
];
const PLOT_MODES: &[&str] = &["all", "best-per-optimizer"];

use Kind::*;
use Range::*;

/// Every recognised key.
pub const KEYS: &[KeyDef] = &[
    key(
        "problem.kind",
        Str,
        Some("\"noisy-least-squares\""),
        Choices(PROBLEM_KINDS),
        "objective family",
    ),
    key(
        "problem.dim",
        Int,
        Some("100"),
        Positive,
        "parameter dimension (input dimension for mlp)",
    ),
    key(
        "problem.samples",
        Int,
        Some("1000"),
        Positive,
        "dataset size (least squares, logistic, mlp)",
    ),
    key(
        "problem.spectrum_decay",
        Float,
        Some("3.0"),
        NonNegative,
        "least-squares covariance eigenvalues span 1 .. 10^-decay",
    ),
    key(
        "problem.label_noise",
        Float,
        Some("0.01"),
        NonNegative,
        "least-squares label noise standard deviation",
    ),
    key(
        "problem.l2",
        Float,
        Some("0.001"),
        NonNegative,
        "logistic regression ridge penalty",
    ),
    key(
        "problem.hidden",
        Int,
        Some("16"),
        Positive,
        "mlp hidden width",
    ),
    key(
        "problem.hessian",
        FloatList,
        None,
        Positive,
        "quadratic Hessian diagonal (default: log-spaced 1 .. 0.01 over problem.dim)",
    ),
    key(
        "problem.center",
        FloatList,
        None,
        Any,
        "quadratic minimiser (default: all ones)",
    ),
    key(
        "problem.noise",
        Str,
        Some("\"minibatch\""),
        Choices(NOISE_MODELS),
        "gradient noise model (quadratics accept none | gaussian)",
    ),
    key(
        "problem.batch_size",
        Int,
        Some("1"),
        Positive,
        "minibatch size; equal to problem.samples gives exact gradients",
    ),
    key(
        "problem.sigma",
        Float,
        Some("0.1"),
        NonNegative,
        "gaussian gradient noise standard deviation",
    ),
    key(
        "problem.data_seed",
        Int,
        None,
        NonNegative,
        "dataset seed (default: the run seed)",
    ),
    key(
        "optimizer.algorithm",
        Str,
        Some("\"sgd-momentum\""),
        Choices(ALGORITHMS),
        "optimizer",
    ),
    key(
        "optimizer.lr",
        Float,
        Some("0.001"),
        NonNegative,
        "learning rate (peak for cosine; eta_a for accel-sgd; gamma for schedule-free)",
    ),
    key(
        "optimizer.lr_schedule",
        Str,
        Some("\"constant\""),
        Choices(LR_SCHEDULES),
        "learning-rate schedule",
    ),
    key(
        "optimizer.warmup",
        Int,
        None,
        NonNegative,
        "cosine warmup steps (default: 5% of run.steps)",
    ),
    key(
        "optimizer.lr_floor",
        Float,
        Some("0.0"),
        NonNegative,
        "cosine final learning rate",
    ),
    key(
        "optimizer.beta1",
        Float,
        Some("0.9"),
        UnitClosed,
        "first momentum (schedule-free: interpolation weight, may be 1)",
    ),
    key(
        "optimizer.beta1_schedule",
        Str,
        Some("\"constant\""),
        Choices(MOMENTUM_SCHEDULES),
        "beta1 schedule",
    ),
    key(
        "optimizer.beta1_k",
        Float,
        Some("1.0"),
        Positive,
        "k of the 1 - k/t schedule for beta1",
    ),
    key(
        "optimizer.beta1_start",
        Float,
        Some("0.0"),
        Unit,
        "starting value of the half-life warmup for beta1",
    ),
    key(
        "optimizer.beta1_warmup",
        Int,
        None,
        Positive,
        "half-life warmup horizon for beta1 (default: run.steps)",
    ),
    key(
        "optimizer.beta2",
        Float,
        Some("0.999"),
        Unit,
        "second-moment EMA (lion: momentum EMA)",
    ),
    key(
        "optimizer.beta3",
        Float,
        None,
        Unit,
        "slow EMA / momentum mix; required by ademamix and accel-adam-avg",
    ),
    key(
        "optimizer.beta3_schedule",
        Str,
        Some("\"constant\""),
        Choices(MOMENTUM_SCHEDULES),
        "beta3 schedule",
    ),
    key(
        "optimizer.beta3_k",
        Float,
        Some("1.0"),
        Positive,
        "k of the 1 - k/t schedule for beta3",
    ),
    key(
        "optimizer.beta3_start",
        Float,
        Some("0.0"),
        Unit,
        "starting value of the half-life warmup for beta3",
    ),
    key(
        "optimizer.beta3_warmup",
        Int,
        None,
        Positive,
        "half-life warmup horizon for beta3 (default: run.steps)",
    ),
    key(
        "optimizer.alpha",
        Float,
        Some("0.0"),
        NonNegative,
        "gradient weight (accel-sgd alpha_a, ademamix slow-EMA weight)",
    ),
    key(
        "optimizer.alpha_warmup",
        Int,
        Some("0"),
        NonNegative,
        "linear warmup horizon for alpha; 0 keeps it constant",
    ),
    key(
        "optimizer.gamma",
        Float,
        Some("0.025"),
        Any,
        "mars-approx correction scale",
    ),
    key(
        "optimizer.averaging",
        Str,
        Some("\"tailed\""),
        Choices(AVERAGING),
        "accel-adam-avg averaging rule",
    ),
    key(
        "optimizer.delta",
        Float,
        Some("0.1"),
        UnitOpenLeft,
        "averaging window fraction",
    ),
    key(
        "optimizer.r",
        Float,
        Some("0.0"),
        NonNegative,
        "schedule-free polynomial averaging exponent",
    ),
    key(
        "optimizer.eps",
        Float,
        Some("1e-8"),
        NonNegative,
        "preconditioner epsilon",
    ),
    key(
        "optimizer.weight_decay",
        Float,
        Some("0.0"),
        NonNegative,
        "decoupled weight decay",
    ),
    key(
        "optimizer.bias_correction",
        Bool,
        None,
        Any,
        "bias correction (default: off for simplified-ademamix and accel-adam-avg, on otherwise)",
    ),
    key(
        "optimizer.clip",
        Bool,
        Some("false"),
        Any,
        "mars-approx unit-norm clipping of the corrected gradient",
    ),
    key(
        "run.steps",
        Int,
        Some("1000"),
        Positive,
        "number of optimizer steps",
    ),
    key(
        "run.seed",
        Int,
        Some("0"),
        NonNegative,
        "run seed (gradient noise; data when problem.data_seed is unset)",
    ),
    key(
        "run.eval_every",
        Int,
        None,
        Positive,
        "metric cadence (default: run.steps / 10)",
    ),
    key(
        "run.snapshot_every",
        Int,
        None,
        Positive,
        "parameter snapshot cadence; must divide run.eval_every",
    ),
    key(
        "sweep.preset",
        Str,
        None,
        Any,
        "named hyperparameter grid (see `presets`)",
    ),
    key(
        "sweep.repeats",
        Int,
        Some("3"),
        Positive,
        "seeds per cell (run.seed, run.seed + 1, ...)",
    ),
    key(
        "sweep.budget",
        Int,
        Some("10000"),
        Positive,
        "maximum cells x repeats",
    ),
    key(
        "sweep.grid.<key>",
        FloatList,
        None,
        Any,
        "values for any problem/optimizer/run key; cartesian product in key order",
    ),
    key(
        "study.presets",
        StrList,
        Some("[\"sgd-momentum-desk\", \"accel-sgd-desk\"]"),
        Any,
        "one tuned sweep preset per compared optimizer",
    ),
    key(
        "study.batch_sizes",
        IntList,
        Some("[1, 1000]"),
        Positive,
        "batch sizes compared",
    ),
    key("study.seeds", Int, Some("10"), Positive, "seeds per cell"),
    key(
        "equiv.mapping",
        Str,
        Some("\"schedule-free\""),
        Choices(MAPPINGS),
        "mapping checked by equiv-check",
    ),
    key(
        "equiv.dim",
        Int,
        Some("10"),
        Positive,
        "quadratic dimension",
    ),
    key(
        "equiv.noise_sigma",
        Float,
        Some("0.1"),
        NonNegative,
        "gaussian gradient noise; 0 is deterministic",
    ),
    key(
        "equiv.horizon",
        Int,
        Some("1000"),
        Positive,
        "steps simulated",
    ),
    key(
        "equiv.tolerance",
        Float,
        Some("1e-9"),
        NonNegative,
        "maximum relative trajectory gap",
    ),
    key(
        "equiv.alpha",
        Float,
        None,
        Any,
        "alpha (agnes, asgd-jain, nesterov alpha_k, ademamix-simplified)",
    ),
    key(
        "equiv.beta",
        Float,
        None,
        Any,
        "beta (schedule-free interpolation, asgd-jain, nesterov beta_k)",
    ),
    key(
        "equiv.gamma",
        Float,
        None,
        Any,
        "gamma (schedule-free step, asgd-jain, mass, nesterov gamma_k, mars-rewrite)",
    ),
    key("equiv.delta", Float, None, Any, "asgd-jain delta"),
    key("equiv.eta", Float, None, Any, "agnes / nesterov step"),
    key("equiv.rho", Float, None, Any, "agnes rho_n (held constant)"),
    key("equiv.eta1", Float, None, Any, "mass eta1"),
    key("equiv.eta2", Float, None, Any, "mass eta2"),
    key(
        "equiv.r",
        Float,
        None,
        NonNegative,
        "schedule-free averaging exponent",
    ),
    key("equiv.beta1", Float, None, Unit, "mars-rewrite beta1"),
    key(
        "equiv.beta2",
        Float,
        None,
        Unit,
        "second-moment EMA (ademamix-simplified, mars-rewrite)",
    ),
    key(
        "equiv.beta3",
        Float,
        None,
        Unit,
        "ademamix-simplified beta3",
    ),
    key(
        "equiv.lr",
        Float,
        None,
        NonNegative,
        "learning rate (ademamix-simplified, mars-rewrite)",
    ),
    key(
        "equiv.eps",
        Float,
        None,
        NonNegative,
        "ademamix-simplified epsilon",
    ),
    key(
        "plot.inputs",
        StrList,
        Some("[]"),
        Any,
        "run CSV files or directories of them",
    ),
    key(
        "plot.mode",
        Str,
        Some("\"all\""),
        Choices(PLOT_MODES),
        "one curve per run, or the best run per algorithm",
    ),
    key(
        "plot.log_y",
        Bool,
        Some("true"),
        Any,
        "logarithmic loss axis",
    ),
    key("plot.title", Str, Some("\"\""), Any, "figure title"),
];

const GRID_PREFIX: &str = "sweep.grid.";

fn lookup(key: &str) -> Option<&'static KeyDef> {
    KEYS.iter().find(|k| k.key == key)
}

/// Checks and normalises `v` (ints widen to floats, scalars to one-element lists).
fn coerce(key: &str, kind: Kind, range: Range, v: Value) -> Result<Value> {
    let mismatch = |v: &Value| Error::config(key, format!("expected {}, got {v}", kind.name()));
    let v = match (kind, v) {
        (Float, Value::Int(i)) => Value::Float(i as f64),
        (Float, v @ Value::Float(_))
        | (Int, v @ Value::Int(_))
        | (Bool, v @ Value::Bool(_))
        | (Str, v @ Value::Str(_)) => v,
        (Int, Value::Float(x)) if x.fract() == 0.0 && x.abs() < 9e15 => Value::Int(x as i64),
        (list, v) if list.element().is_some() => {
            let elem = list.element().expect("list kind");
            let items = match v {
                Value::List(items) => items,
                Value::Str(s) if s.contains(',') => s
                    .split(',')
                    .map(|p| Value::parse_literal(key, p))
                    .collect::<Result<_>>()?,
                scalar => vec![scalar],
            };
            return Ok(Value::List(
                items
                    .into_iter()
                    .map(|v| coerce(key, elem, range, v))
                    .collect::<Result<_>>()?,
            ));
        }
        (_, v) => return Err(mismatch(&v)),
    };
    range.check(&v).map_err(|m| Error::config(key, m))?;
    Ok(v)
}

fn validate_entry(key: &str, v: Value) -> Result<Value> {
    if let Some(inner) = key.strip_prefix(GRID_PREFIX) {
        let def = lookup(inner)
            .filter(|d| {
                !d.key.starts_with("sweep.")
                    && d.kind.element().is_none()
                    && !d.key.starts_with("equiv.")
            })
            .ok_or_else(|| Error::config(key, format!("`{inner}` is not a sweepable key")))?;
        let items = match v {
            Value::List(items) if !items.is_empty() => items,
            Value::List(_) => {
                return Err(Error::config(key, "grid values must be a non-empty list"))
            }
            Value::Str(s) if s.contains(',') => s
                .split(',')
                .map(|p| Value::parse_literal(key, p))
                .collect::<Result<_>>()?,
            other => vec![other],
        };
        let items = items
            .into_iter()
            .map(|v| coerce(key, def.kind, def.range, v))
            .collect::<Result<_>>()?;
        return Ok(Value::List(items));
    }
    let def = lookup(key)
        .ok_or_else(|| Error::config(key, "unknown key (run with --help for the list)"))?;
    coerce(key, def.kind, def.range, v)
}

fn flatten(prefix: &str, table: toml::Table, out: &mut Vec<(String, toml::Value)>) {
    for (k, v) in table {
        let full = if prefix.is_empty() {
            k
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => flatten(&full, t, out),
            v => out.push((full, v)),
        }
    }
}

/// Resolved key/value settings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, Value>,
}

impl Settings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let mut entries = Vec::new();
        flatten("", table, &mut entries);
        let mut s = Self::new();
        for (k, v) in entries {
            let v = Value::from_toml(&k, v)?;
            s.set(&k, v)?;
        }
        Ok(s)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn set(&mut self, key: &str, value: Value) -> Result<()> {
        let v = validate_entry(key, value)?;
        self.values.insert(key.to_string(), v);
        Ok(())
    }

    /// Applies `key=value`.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| {
            Error::Parse(format!(
                "override `{assignment}` is not of the form key=value"
            ))
        })?;
        let k = k.trim();
        let v = Value::parse_literal(k, v)?;
        self.set(k, v)
    }

    pub fn unset(&mut self, key: &str) {
        self.values.remove(key);
    }

    /// Explicit values only.
    pub fn explicit(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Explicit value or registry default; `None` for unset optional keys.
    pub fn get(&self, key: &str) -> Option<Value> {
        if let Some(v) = self.values.get(key) {
            return Some(v.clone());
        }
        let def = lookup(key)?;
        let lit = def.default?;
        Some(
            validate_entry(
                key,
                Value::parse_literal(key, lit).expect("registry default parses"),
            )
            .expect("registry default valid"),
        )
    }

    pub fn is_set(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        self.opt_f64(key)?
            .ok_or_else(|| Error::config(key, "required but not set"))
    }

    pub fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_f64()
                .map(Some)
                .ok_or_else(|| Error::config(key, "expected a number")),
        }
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        self.opt_u64(key)?
            .ok_or_else(|| Error::config(key, "required but not set"))
    }

    pub fn opt_u64(&self, key: &str) -> Result<Option<u64>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Int(i)) if i >= 0 => Ok(Some(i as u64)),
            Some(v) => Err(Error::config(
                key,
                format!("expected a non-negative integer, got {v}"),
            )),
        }
    }

    pub fn bool(&self, key: &str) -> Result<Option<bool>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Bool(b)) => Ok(Some(b)),
            Some(v) => Err(Error::config(key, format!("expected a boolean, got {v}"))),
        }
    }

    pub fn str(&self, key: &str) -> Result<String> {
        match self.get(key) {
            Some(Value::Str(s)) => Ok(s),
            Some(v) => Err(Error::config(key, format!("expected a string, got {v}"))),
            None => Err(Error::config(key, "required but not set")),
        }
    }

    pub fn opt_str(&self, key: &str) -> Result<Option<String>> {
        if self.get(key).is_none() {
            return Ok(None);
        }
        self.str(key).map(Some)
    }

    fn list(&self, key: &str) -> Result<Vec<Value>> {
        match self.get(key) {
            Some(Value::List(v)) => Ok(v),
            Some(v) => Err(Error::config(key, format!("expected a list, got {v}"))),
            None => Ok(Vec::new()),
        }
    }

    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        if self.get(key).is_none() {
            return Ok(None);
        }
        let items = self.list(key)?;
        items
            .iter()
            .map(|v| {
                v.as_f64()
                    .ok_or_else(|| Error::config(key, "expected numbers"))
            })
            .collect::<Result<_>>()
            .map(Some)
    }

    pub fn u64_list(&self, key: &str) -> Result<Vec<u64>> {
        self.list(key)?
            .into_iter()
            .map(|v| match v {
                Value::Int(i) if i >= 0 => Ok(i as u64),
                v => Err(Error::config(
                    key,
                    format!("expected non-negative integers, got {v}"),
                )),
            })
            .collect()
    }

    pub fn str_list(&self, key: &str) -> Result<Vec<String>> {
        self.list(key)?
            .into_iter()
            .map(|v| match v {
                Value::Str(s) => Ok(s),
                v => Err(Error::config(key, format!("expected strings, got {v}"))),
            })
            .collect()
    }

    /// Sweep grid axes in key order.
    pub fn grid(&self) -> Vec<(String, Vec<Value>)> {
        self.values
            .iter()
            .filter_map(|(k, v)| {
                let inner = k.strip_prefix(GRID_PREFIX)?;
                match v {
                    Value::List(items) => Some((inner.to_string(), items.clone())),
                    _ => None,
                }
            })
            .collect()
    }

    pub fn problem_spec(&self) -> Result<ProblemSpec> {
        let kind = self.str("problem.kind")?;
        let dim = self.u64("problem.dim")? as usize;
        let samples = self.u64("problem.samples")? as usize;
        let family = match kind.as_str() {
            "quadratic" => {
                let hessian = match self.f64_list("problem.hessian")? {
                    Some(h) => h,
                    None => (0..dim)
                        .map(|i| {
                            if dim == 1 {
                                1.0
                            } else {
                                10f64.powf(-2.0 * i as f64 / (dim - 1) as f64)
                            }
                        })
                        .collect(),
                };
                let center = self
                    .f64_list("problem.center")?
                    .unwrap_or_else(|| vec![1.0; hessian.len()]);
                if center.len() != hessian.len() {
                    return Err(Error::config(
                        "problem.center",
                        format!(
                            "length {} differs from problem.hessian length {}",
                            center.len(),
                            hessian.len()
                        ),
                    ));
                }
                Family::Quadratic { hessian, center }
            }
            "noisy-least-squares" => Family::NoisyLeastSquares {
                dim,
                samples,
                spectrum_decay: self.f64("problem.spectrum_decay")?,
                label_noise: self.f64("problem.label_noise")?,
            },
            "logistic" => Family::Logistic {
                dim,
                samples,
                l2: self.f64("problem.l2")?,
            },
            "mlp" => Family::Mlp {
                input_dim: dim,
                hidden: self.u64("problem.hidden")? as usize,
                samples,
            },
            other => {
                return Err(Error::config(
                    "problem.kind",
                    format!("unknown kind `{other}`"),
                ))
            }
        };
        let noise = match self.str("problem.noise")?.as_str() {
            "none" => NoiseModel::None,
            "gaussian" => NoiseModel::Gaussian {
                sigma: self.f64("problem.sigma")?,
            },
            _ => {
                if matches!(family, Family::Quadratic { .. }) {
                    return Err(Error::config(
                        "problem.noise",
                        "a quadratic has no dataset; use `none` or `gaussian`",
                    ));
                }
                let batch_size = self.u64("problem.batch_size")? as usize;
                if batch_size > samples {
                    return Err(Error::config(
                        "problem.batch_size",
                        format!("{batch_size} exceeds problem.samples = {samples}"),
                    ));
                }
                NoiseModel::Minibatch { batch_size }
            }
        };
        Ok(ProblemSpec {
            family,
            noise,
            data_seed: self.opt_u64("problem.data_seed")?,
        })
    }

    fn momentum(&self, name: &str, value: f64, steps: u64) -> Result<MomentumSchedule> {
        let key = |s: &str| format!("optimizer.{name}{s}");
        Ok(match self.str(&key("_schedule"))?.as_str() {
            "one-minus-k-over-t" => MomentumSchedule::OneMinusKOverT {
                k: self.f64(&key("_k"))?,
            },
            "half-life-warmup" => MomentumSchedule::HalfLifeWarmup {
                start: self.f64(&key("_start"))?,
                base: value,
                horizon: self.opt_u64(&key("_warmup"))?.unwrap_or(steps),
            },
            _ => MomentumSchedule::constant(value),
        })
    }

    pub fn optimizer_config(&self, steps: u64) -> Result<OptimizerConfig> {
        let name = self.str("optimizer.algorithm")?;
        let algorithm: Algorithm = name.parse().map_err(|_| {
            Error::config("optimizer.algorithm", format!("unknown algorithm `{name}`"))
        })?;
        let lr = self.f64("optimizer.lr")?;
        let lr = match self.str("optimizer.lr_schedule")?.as_str() {
            "cosine" => LearningRateSchedule::CosineWithWarmup {
                peak: lr,
                warmup: self.opt_u64("optimizer.warmup")?.unwrap_or(steps / 20),
                total: steps,
                floor: self.f64("optimizer.lr_floor")?,
            },
            _ => LearningRateSchedule::constant(lr),
        };
        let beta1 = self.momentum("beta1", self.f64("optimizer.beta1")?, steps)?;
        let beta3 = match self.opt_f64("optimizer.beta3")? {
            Some(b) => Some(self.momentum("beta3", b, steps)?),
            None => None,
        };
        let alpha_target = self.f64("optimizer.alpha")?;
        let alpha = match self.u64("optimizer.alpha_warmup")? {
            0 => AlphaSchedule::constant(alpha_target),
            horizon => AlphaSchedule::LinearWarmup {
                target: alpha_target,
                horizon,
            },
        };
        let delta = self.f64("optimizer.delta")?;
        let averaging = match self.str("optimizer.averaging")?.as_str() {
            "uniform" => AveragingSchedule::Uniform,
            "as-written-max" => AveragingSchedule::AsWrittenMax { delta },
            _ => AveragingSchedule::Tailed { delta },
        };
        let defaults = OptimizerConfig::new(algorithm);
        let cfg = OptimizerConfig {
            algorithm,
            lr,
            beta1,
            beta2: self.f64("optimizer.beta2")?,
            beta3,
            alpha,
            gamma: self.f64("optimizer.gamma")?,
            averaging,
            r: self.f64("optimizer.r")?,
            eps: self.f64("optimizer.eps")?,
            weight_decay: self.f64("optimizer.weight_decay")?,
            bias_correction: self
                .bool("optimizer.bias_correction")?
                .unwrap_or(defaults.bias_correction),
            clip: self.bool("optimizer.clip")?.unwrap_or(false),
        };
        cfg.validate().map_err(|e| match e {
            Error::InvalidParameter { name, reason } => {
                let key = if lookup(&format!("optimizer.{name}")).is_some() {
                    format!("optimizer.{name}")
                } else {
                    name
                };
                Error::config(key, reason)
            }
            e => e,
        })?;
        Ok(cfg)
    }

    pub fn run_spec(&self) -> Result<RunSpec> {
        let steps = self.u64("run.steps")?;
        let eval_every = self
            .opt_u64("run.eval_every")?
            .unwrap_or((steps / 10).max(1));
        let spec = RunSpec {
            problem: self.problem_spec()?,
            optimizer: self.optimizer_config(steps)?,
            steps,
            seed: self.u64("run.seed")?,
            eval_every,
            snapshot_every: self.opt_u64("run.snapshot_every")?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn equiv_request(&self) -> Result<(Check, CheckSetup, f64)> {
        let mapping: Mapping = self.str("equiv.mapping")?.parse()?;
        let p = |key: &str, default: f64| -> Result<f64> {
            Ok(self.opt_f64(&format!("equiv.{key}"))?.unwrap_or(default))
        };
        let horizon = self.u64("equiv.horizon")? as usize;
        let check = match mapping {
            Mapping::ScheduleFree => Check::ScheduleFree {
                beta: p("beta", 0.9)?,
                gamma: p("gamma", 0.5)?,
                r: p("r", 0.0)?,
            },
            Mapping::Agnes => Check::Legacy(LegacyForm::Agnes {
                alpha: p("alpha", 0.3)?,
                eta: p("eta", 0.2)?,
                rho: vec![p("rho", 0.8)?; horizon],
            }),
            Mapping::AsgdJain => Check::Legacy(LegacyForm::AsgdJain {
                alpha: p("alpha", 0.4)?,
                beta: p("beta", 0.1)?,
                gamma: p("gamma", 0.9)?,
                delta: p("delta", 0.3)?,
            }),
            Mapping::Mass => Check::Legacy(LegacyForm::Mass {
                eta1: p("eta1", 0.4)?,
                eta2: p("eta2", 0.1)?,
                gamma: p("gamma", 0.5)?,
            }),
            Mapping::Nesterov => Check::Legacy(LegacyForm::NesterovVaswani {
                eta: p("eta", 0.2)?,
                alpha: vec![p("alpha", 0.3)?; horizon + 1],
                beta: vec![p("beta", 0.8)?; horizon],
                gamma: vec![p("gamma", 1.5)?; horizon],
            }),
            Mapping::AdemamixSimplified => Check::AdemamixSimplified {
                beta3: p("beta3", 0.99)?,
                alpha: p("alpha", 8.0)?,
                lr: p("lr", 0.01)?,
                beta2: p("beta2", 0.999)?,
                eps: p("eps", 1e-8)?,
            },
            Mapping::MarsRewrite => Check::MarsRewrite {
                beta1: p("beta1", 0.9)?,
                gamma: p("gamma", 0.025)?,
                beta2: p("beta2", 0.999)?,
                lr: p("lr", 0.01)?,
            },
        };
        let setup = CheckSetup {
            dim: self.u64("equiv.dim")? as usize,
            noise_sigma: self.f64("equiv.noise_sigma")?,
            seed: self.u64("run.seed")?,
            horizon,
        };
        Ok((check, setup, self.f64("equiv.tolerance")?))
    }
}

/// Plain-text table of every key with type, default and range.
pub fn key_reference() -> String {
    let mut out =
        String::from("Config keys (TOML sections map to the prefix before the first dot):\n");
    for k in KEYS {
        let default = k.default.unwrap_or("(derived)");
        out.push_str(&format!(
            "  {:<28} {:<11} default {:<40} range {}\n      {}\n",
            k.key,
            k.kind.name(),
            default,
            k.range,
            k.doc
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_to_a_valid_run() {
        let spec = Settings::new().run_spec().unwrap();
        assert_eq!(spec.steps, 1000);
        assert_eq!(spec.eval_every, 100);
        assert_eq!(spec.optimizer.algorithm, Algorithm::SgdMomentum);
        assert_eq!(spec.problem.noise, NoiseModel::Minibatch { batch_size: 1 });
    }

    #[test]
    fn toml_sections_flatten() {
        let s = Settings::from_toml_str(
            "[optimizer]\nalgorithm = \"accel-sgd\"\nlr = 1\n[sweep.grid]\n\"optimizer.alpha\" = [0.1, 1]\n",
        )
        .unwrap();
        assert_eq!(s.get("optimizer.lr"), Some(Value::Float(1.0)));
        assert_eq!(
            s.grid(),
            vec![(
                "optimizer.alpha".to_string(),
                vec![Value::Float(0.1), Value::Float(1.0)]
            )]
        );
    }

    #[test]
    fn ademamix_without_beta3_names_the_key() {
        let s = Settings::from_toml_str("[optimizer]\nalgorithm = \"ademamix\"\n").unwrap();
        let err = s.run_spec().unwrap_err().to_string();
        assert!(err.contains("optimizer.beta3"), "{err}");
    }

    #[test]
    fn override_replaces_only_that_key() {
        let mut s = Settings::from_toml_str(
            "[optimizer]\nalgorithm = \"ademamix\"\nbeta3 = 0.999\nalpha = 2\n",
        )
        .unwrap();
        let before = s.run_spec().unwrap();
        s.apply_override("optimizer.alpha=8").unwrap();
        let after = s.run_spec().unwrap();
        assert_eq!(after.optimizer.alpha, AlphaSchedule::constant(8.0));
        let mut restored = after.clone();
        restored.optimizer.alpha = before.optimizer.alpha;
        assert_eq!(restored, before);
    }

    #[test]
    fn unknown_and_out_of_range_keys_are_named() {
        let mut s = Settings::new();
        let err = s
            .apply_override("optimizer.momentum=0.9")
            .unwrap_err()
            .to_string();
        assert!(err.contains("optimizer.momentum"), "{err}");
        let err = s
            .apply_override("optimizer.beta2=1.5")
            .unwrap_err()
            .to_string();
        assert!(
            err.contains("optimizer.beta2") && err.contains("[0, 1)"),
            "{err}"
        );
        let err = s
            .apply_override("optimizer.algorithm=sgd")
            .unwrap_err()
            .to_string();
        assert!(err.contains("optimizer.algorithm"), "{err}");
        assert!(Settings::from_toml_str("[run]\nstep = 3\n").is_err());
    }

    #[test]
    fn grid_keys_must_be_sweepable() {
        let mut s = Settings::new();
        s.apply_override("sweep.grid.optimizer.lr=[0.1, 0.2]")
            .unwrap();
        s.apply_override("sweep.grid.optimizer.beta1=0.1,0.5")
            .unwrap();
        assert_eq!(s.grid().len(), 2);
        assert!(s.apply_override("sweep.grid.sweep.repeats=[1]").is_err());
        assert!(s.apply_override("sweep.grid.optimizer.nope=[1]").is_err());
    }

    #[test]
    fn cosine_warmup_defaults_to_five_percent() {
        let mut s = Settings::new();
        s.apply_override("optimizer.lr_schedule=cosine").unwrap();
        s.apply_override("run.steps=2000").unwrap();
        match s.run_spec().unwrap().optimizer.lr {
            LearningRateSchedule::CosineWithWarmup { warmup, total, .. } => {
                assert_eq!((warmup, total), (100, 2000))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn quadratic_rejects_minibatch() {
        let s = Settings::from_toml_str("[problem]\nkind = \"quadratic\"\ndim = 3\n").unwrap();
        let err = s.run_spec().unwrap_err().to_string();
        assert!(err.contains("problem.noise"), "{err}");
    }

    #[test]
    fn reference_lists_every_key() {
        let r = key_reference();
        for k in KEYS {
            assert!(r.contains(k.key));
        }
    }
}
