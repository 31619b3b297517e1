//! Run configuration: a flat `key = value` text format with dotted sections.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::CliError;

const KNOWN_KEYS: &[&str] = &[
    "model.name",
    "model.x0",
    "model.v0",
    "model.dim",
    "model.sigma",
    "model.mu",
    "model.r",
    "model.beta",
    "model.kappa",
    "model.theta",
    "model.xi",
    "model.rho",
    "model.alpha",
    "barrier.K",
    "barrier.Kprime",
    "barrier.hyperplanes",
    "barrier.witness",
    "barrier.growth",
    "payoff.kind",
    "payoff.strike",
    "payoff.cap",
    "plan.paths",
    "plan.steps",
    "plan.horizon",
    "plan.seed",
    "estimators",
    "rate",
    "output",
    "group.cap",
    "group.truncation",
    "group.samples",
];

/// A wall normal with its offset.
pub type Plane = (Vec<f64>, f64);

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// Parsed but not yet interpreted key-value pairs.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, Entry>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(CliError::config(Some(line), None, "expected `key = value`"));
            };
            let key = key.trim();
            let value = value.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(CliError::config(Some(line), Some(key), "unknown key"));
            }
            if value.is_empty() {
                return Err(CliError::config(Some(line), Some(key), "empty value"));
            }
            if let Some(prev) = entries.get(key) {
                let prev: &Entry = prev;
                return Err(CliError::config(Some(line), Some(key), &format!("duplicate key, first set on line {}", prev.line)));
            }
            entries.insert(key.to_string(), Entry { value: value.to_string(), line });
        }
        Ok(Self { entries })
    }

    pub fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    fn fail(&self, key: &str, msg: &str) -> CliError {
        CliError::config(self.entries.get(key).map(|e| e.line), Some(key), msg)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(e) => e.value.parse().map(Some).map_err(|_| self.fail(key, &format!("cannot parse `{}`", e.value))),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        self.get(key)?.ok_or_else(|| CliError::config(None, Some(key), "missing required key"))
    }

    pub fn number(&self, key: &str) -> Result<Option<f64>, CliError> {
        match self.get::<f64>(key)? {
            Some(v) if !v.is_finite() => Err(self.fail(key, "must be finite")),
            v => Ok(v),
        }
    }

    pub fn require_number(&self, key: &str) -> Result<f64, CliError> {
        self.number(key)?.ok_or_else(|| CliError::config(None, Some(key), "missing required key"))
    }

    pub fn vector(&self, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        self.str(key).map(|v| parse_vector(v).map_err(|m| self.fail(key, &m))).transpose()
    }

    /// Rejects keys of the given section that the current choice does not use.
    pub fn only(&self, section: &str, allowed: &[&str], context: &str) -> Result<(), CliError> {
        let prefix = format!("{section}.");
        for (key, e) in &self.entries {
            if let Some(rest) = key.strip_prefix(&prefix) {
                if !allowed.contains(&rest) {
                    return Err(CliError::config(Some(e.line), Some(key), &format!("not used by {context}")));
                }
            }
        }
        Ok(())
    }

    pub fn hyperplanes(&self, key: &str) -> Result<Option<Vec<Plane>>, CliError> {
        let Some(text) = self.str(key) else { return Ok(None) };
        let mut out = Vec::new();
        for part in text.split(';') {
            let Some((normal, offset)) = part.split_once(':') else {
                return Err(self.fail(key, "each hyperplane is written `a1 a2 ... : k`"));
            };
            let normal = parse_vector(normal).map_err(|m| self.fail(key, &m))?;
            let offset: f64 = offset.trim().parse().map_err(|_| self.fail(key, &format!("cannot parse offset `{}`", offset.trim())))?;
            if !offset.is_finite() {
                return Err(self.fail(key, "offsets must be finite"));
            }
            out.push((normal, offset));
        }
        Ok(Some(out))
    }
}

fn parse_vector(text: &str) -> Result<Vec<f64>, String> {
    let values: Vec<f64> = text.split_whitespace().map(|t| t.parse::<f64>().map_err(|_| format!("cannot parse number `{t}`"))).collect::<Result<_, _>>()?;
    if values.is_empty() {
        return Err("expected at least one number".into());
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err("numbers must be finite".into());
    }
    Ok(values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelName {
    Abm,
    Bm,
    Gbm,
    Cev,
    Heston,
    Sabr,
}

impl ModelName {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "abm" => Self::Abm,
            "bm" => Self::Bm,
            "gbm" => Self::Gbm,
            "cev" => Self::Cev,
            "heston" => Self::Heston,
            "sabr" => Self::Sabr,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Abm => "abm",
            Self::Bm => "bm",
            Self::Gbm => "gbm",
            Self::Cev => "cev",
            Self::Heston => "heston",
            Self::Sabr => "sabr",
        }
    }

    fn keys(self) -> &'static [&'static str] {
        match self {
            Self::Abm => &["name", "x0", "sigma", "mu"],
            Self::Bm => &["name", "x0", "sigma", "mu", "dim"],
            Self::Gbm => &["name", "x0", "sigma", "r"],
            Self::Cev => &["name", "x0", "sigma", "beta", "r"],
            Self::Heston => &["name", "x0", "v0", "kappa", "theta", "xi", "rho", "r"],
            Self::Sabr => &["name", "x0", "v0", "alpha", "beta", "rho", "r"],
        }
    }

    pub fn is_stochastic_volatility(self) -> bool {
        matches!(self, Self::Heston | Self::Sabr)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: ModelName,
    /// Full starting state, volatility appended for stochastic-volatility models.
    pub x0: Vec<f64>,
    pub sigma: f64,
    pub mu: f64,
    /// Drift rate; defaults to the discount rate.
    pub r: f64,
    pub beta: f64,
    pub kappa: f64,
    pub theta: f64,
    pub xi: f64,
    pub rho: f64,
    pub alpha: f64,
}

impl ModelSpec {
    pub fn dim(&self) -> usize {
        self.x0.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BarrierSpec {
    /// Knock-out when the first coordinate falls to `k`.
    Single {
        k: f64,
    },
    /// Knock-out outside `(k, k + k_prime)` on the first coordinate.
    Double {
        k: f64,
        k_prime: f64,
    },
    /// Knock-out when the first coordinate falls to `k (1 + growth t)`.
    Moving {
        k: f64,
        growth: f64,
    },
    Hyperplanes {
        planes: Vec<Plane>,
        witness: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayoffKind {
    Call,
    Put,
    Digital,
    Indicator,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PayoffSpec {
    pub kind: PayoffKind,
    pub strike: f64,
    pub cap: f64,
}

impl PayoffSpec {
    /// Payoff on the first coordinate, before support clamping and capping.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let s = x[0];
        match self.kind {
            PayoffKind::Call => (s - self.strike).max(0.0),
            PayoffKind::Put => (self.strike - s).max(0.0),
            PayoffKind::Digital => f64::from(u8::from(s > self.strike)),
            PayoffKind::Indicator => 1.0,
            PayoffKind::Zero => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Symmetrized,
    OracleDiscrete,
    OracleBridge,
    ClosedForm,
}

impl EstimatorKind {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "symmetrized" => Self::Symmetrized,
            "oracle-discrete" => Self::OracleDiscrete,
            "oracle-bridge" => Self::OracleBridge,
            "closed-form" => Self::ClosedForm,
            _ => return None,
        })
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Symmetrized => "symmetrized",
            Self::OracleDiscrete => "oracle-discrete",
            Self::OracleBridge => "oracle-bridge",
            Self::ClosedForm => "closed-form",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanSpec {
    pub paths: usize,
    pub steps: usize,
    pub horizon: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupSpec {
    pub cap: usize,
    pub truncation: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub barrier: BarrierSpec,
    pub payoff: PayoffSpec,
    pub plan: PlanSpec,
    pub estimators: Vec<EstimatorKind>,
    pub rate: f64,
    pub output: Option<PathBuf>,
    pub group: GroupSpec,
    /// Hex SHA-256 of the configuration text.
    pub hash: String,
}

pub fn config_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    let mut out = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(out, "{b:02x}");
    }
    out
}

fn positive(raw: &RawConfig, key: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(raw.fail(key, "must be positive"))
    }
}

pub fn parse_model(raw: &RawConfig) -> Result<ModelSpec, CliError> {
    let name_text: String = raw.require("model.name")?;
    let name = ModelName::parse(&name_text).ok_or_else(|| raw.fail("model.name", "expected one of abm, bm, gbm, cev, heston, sabr"))?;
    raw.only("model", name.keys(), &format!("model {}", name.name()))?;
    let rate = raw.number("rate")?.unwrap_or(0.0);
    let x0 = raw.vector("model.x0")?.ok_or_else(|| CliError::config(None, Some("model.x0"), "missing required key"))?;
    let mut spec = ModelSpec {
        name,
        x0,
        sigma: 0.0,
        mu: raw.number("model.mu")?.unwrap_or(0.0),
        r: raw.number("model.r")?.unwrap_or(rate),
        beta: 0.0,
        kappa: 0.0,
        theta: 0.0,
        xi: 0.0,
        rho: raw.number("model.rho")?.unwrap_or(0.0),
        alpha: 0.0,
    };
    let expected_len = match name {
        ModelName::Bm => {
            let dim: usize = raw.get("model.dim")?.unwrap_or(1);
            if dim == 0 {
                return Err(raw.fail("model.dim", "must be at least 1"));
            }
            dim
        }
        _ => 1,
    };
    if spec.x0.len() != expected_len {
        return Err(raw.fail("model.x0", &format!("expected {expected_len} number(s), got {}", spec.x0.len())));
    }
    match name {
        ModelName::Abm | ModelName::Bm | ModelName::Gbm => spec.sigma = raw.require_number("model.sigma")?,
        ModelName::Cev => {
            spec.sigma = raw.require_number("model.sigma")?;
            spec.beta = raw.require_number("model.beta")?;
        }
        ModelName::Heston => {
            spec.kappa = raw.require_number("model.kappa")?;
            spec.theta = raw.require_number("model.theta")?;
            spec.xi = raw.require_number("model.xi")?;
        }
        ModelName::Sabr => {
            spec.alpha = raw.require_number("model.alpha")?;
            spec.beta = raw.require_number("model.beta")?;
        }
    }
    if name.is_stochastic_volatility() {
        spec.x0.push(raw.require_number("model.v0")?);
    }
    if matches!(name, ModelName::Gbm | ModelName::Cev) {
        positive(raw, "model.sigma", spec.sigma)?;
    }
    Ok(spec)
}

pub fn parse_barrier(raw: &RawConfig, dim: Option<usize>) -> Result<BarrierSpec, CliError> {
    let single = raw.number("barrier.K")?;
    let planes = raw.hyperplanes("barrier.hyperplanes")?;
    match (single, planes) {
        (Some(_), Some(_)) => Err(raw.fail("barrier.hyperplanes", "give either barrier.K or barrier.hyperplanes, not both")),
        (None, None) => Err(CliError::config(None, Some("barrier.K"), "missing barrier: set barrier.K or barrier.hyperplanes")),
        (Some(k), None) => {
            raw.only("barrier", &["K", "Kprime", "growth"], "a barrier.K barrier")?;
            match (raw.number("barrier.Kprime")?, raw.number("barrier.growth")?) {
                (Some(_), Some(_)) => Err(raw.fail("barrier.growth", "barrier.Kprime and barrier.growth cannot be combined")),
                (Some(kp), None) => Ok(BarrierSpec::Double { k, k_prime: positive(raw, "barrier.Kprime", kp)? }),
                (None, Some(growth)) => Ok(BarrierSpec::Moving { k, growth }),
                (None, None) => Ok(BarrierSpec::Single { k }),
            }
        }
        (None, Some(planes)) => {
            raw.only("barrier", &["hyperplanes", "witness"], "a barrier.hyperplanes barrier")?;
            let witness = raw.vector("barrier.witness")?.ok_or_else(|| CliError::config(None, Some("barrier.witness"), "required with barrier.hyperplanes"))?;
            let d = dim.unwrap_or(witness.len());
            if witness.len() != d {
                return Err(raw.fail("barrier.witness", &format!("expected {d} coordinates, got {}", witness.len())));
            }
            if let Some(bad) = planes.iter().find(|(n, _)| n.len() != d) {
                return Err(raw.fail("barrier.hyperplanes", &format!("normal {:?} has {} coordinates, expected {d}", bad.0, bad.0.len())));
            }
            Ok(BarrierSpec::Hyperplanes { planes, witness })
        }
    }
}

pub fn parse_group(raw: &RawConfig) -> Result<GroupSpec, CliError> {
    Ok(GroupSpec {
        cap: raw.get("group.cap")?.unwrap_or(symbar_core::group::DEFAULT_CAP),
        truncation: raw.get("group.truncation")?.unwrap_or(5),
        samples: raw.get("group.samples")?.unwrap_or(symbar_core::group::DEFAULT_DISJOINTNESS_SAMPLES),
    })
}

fn parse_payoff(raw: &RawConfig) -> Result<PayoffSpec, CliError> {
    let kind = match raw.str("payoff.kind").unwrap_or("indicator") {
        "call" => PayoffKind::Call,
        "put" => PayoffKind::Put,
        "digital" => PayoffKind::Digital,
        "indicator" => PayoffKind::Indicator,
        "zero" => PayoffKind::Zero,
        _ => return Err(raw.fail("payoff.kind", "expected one of call, put, digital, indicator, zero")),
    };
    let strike = match kind {
        PayoffKind::Call | PayoffKind::Put | PayoffKind::Digital => raw.require_number("payoff.strike")?,
        _ => {
            raw.only("payoff", &["kind", "cap"], "this payoff kind")?;
            0.0
        }
    };
    let cap = positive(raw, "payoff.cap", raw.number("payoff.cap")?.unwrap_or(symbar_core::pricing::DEFAULT_CAP))?;
    Ok(PayoffSpec { kind, strike, cap })
}

fn parse_plan(raw: &RawConfig) -> Result<PlanSpec, CliError> {
    let paths: usize = raw.require("plan.paths")?;
    let steps: usize = raw.require("plan.steps")?;
    if paths == 0 {
        return Err(raw.fail("plan.paths", "must be positive"));
    }
    if steps == 0 {
        return Err(raw.fail("plan.steps", "must be positive"));
    }
    let horizon = positive(raw, "plan.horizon", raw.require_number("plan.horizon")?)?;
    Ok(PlanSpec { paths, steps, horizon, seed: raw.get("plan.seed")?.unwrap_or(1) })
}

fn parse_estimators(raw: &RawConfig) -> Result<Vec<EstimatorKind>, CliError> {
    let text = raw.str("estimators").unwrap_or("symmetrized");
    let mut out = Vec::new();
    for name in text.split(',').map(str::trim) {
        let kind = EstimatorKind::parse(name).ok_or_else(|| raw.fail("estimators", &format!("unknown estimator `{name}`")))?;
        if out.contains(&kind) {
            return Err(raw.fail("estimators", &format!("`{name}` listed twice")));
        }
        out.push(kind);
    }
    Ok(out)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let raw = RawConfig::parse(text)?;
        let model = parse_model(&raw)?;
        let barrier = parse_barrier(&raw, Some(model.dim()))?;
        Ok(Self {
            barrier,
            payoff: parse_payoff(&raw)?,
            plan: parse_plan(&raw)?,
            estimators: parse_estimators(&raw)?,
            rate: raw.number("rate")?.unwrap_or(0.0),
            output: raw.str("output").map(PathBuf::from),
            group: parse_group(&raw)?,
            hash: config_hash(text),
            model,
        })
    }
}
