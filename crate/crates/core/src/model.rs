//! Birth-and-death models absorbed at 0.
//!
//! A model is a pair of rate sequences `(b_i, d_i)` with `b_0 = d_0 = 0`.
//! Rates are evaluated on demand; nothing is precomputed past the states a
//! caller actually asks for. Built-in families cover the closed forms used
//! throughout the crate; explicit tables carry a declared tail rule.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::LogSum;

/// Named numeric parameters of a model family.
pub type Params = BTreeMap<String, f64>;

/// How a tabulated model answers queries past the end of its table.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailRule {
    #[default]
    Error,
    /// Repeat the last tabulated pair forever.
    Constant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `b_i = b i^a`, `d_i = d i^a`. `a = 1` is the linear process.
    Power { b: f64, d: f64, a: f64 },
    /// `b_i = b i`, `d_i = d i + c i (i - 1)`.
    Logistic { b: f64, c: f64, d: f64 },
    /// `(b_1, d_1)` at state 1, constant `(b, d)` from state 2 on.
    ConstantTail { b1: f64, d1: f64, b: f64, d: f64 },
    /// `b_i = |sin(i pi / 2)| i + 1`, `d_i = 4 i`.
    Example3,
    /// Explicit rates indexed from state 0.
    Table {
        birth: Vec<f64>,
        death: Vec<f64>,
        tail: TailRule,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BirthDeathModel {
    pub name: String,
    pub family: Family,
}

/// Outcome of [`validate`]. Errors make the model unusable; warnings flag
/// parameter choices outside the regime the theory covers.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Number of states scanned by [`validate`] for closed-form families.
const CLOSED_FORM_SCAN: u64 = 10_000;

impl BirthDeathModel {
    /// Build a tabulated model. `birth[0]` and `death[0]` are the rates of
    /// state 0 and must both be zero for the model to validate.
    pub fn from_table(
        name: impl Into<String>,
        birth: Vec<f64>,
        death: Vec<f64>,
        tail: TailRule,
    ) -> Result<Self> {
        if birth.len() != death.len() {
            return Err(Error::InvalidModel(format!(
                "birth table has {} entries but death table has {}",
                birth.len(),
                death.len()
            )));
        }
        if birth.len() < 2 {
            return Err(Error::InvalidModel(
                "rate tables need at least states 0 and 1".into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            family: Family::Table { birth, death, tail },
        })
    }

    /// Birth and death rates at state `i`.
    #[inline]
    pub fn rates(&self, i: u64) -> Result<(f64, f64)> {
        if i == 0 {
            if let Family::Table { birth, death, .. } = &self.family {
                return Ok((birth[0], death[0]));
            }
            return Ok((0.0, 0.0));
        }
        let x = i as f64;
        Ok(match &self.family {
            Family::Power { b, d, a } => {
                let s = x.powf(*a);
                (b * s, d * s)
            }
            Family::Logistic { b, c, d } => (b * x, d * x + c * x * (x - 1.0)),
            Family::ConstantTail { b1, d1, b, d } => {
                if i == 1 {
                    (*b1, *d1)
                } else {
                    (*b, *d)
                }
            }
            // |sin(i pi / 2)| is exactly 1 on odd states and 0 on even ones.
            Family::Example3 => {
                let s = if i % 2 == 1 { x } else { 0.0 };
                (s + 1.0, 4.0 * x)
            }
            Family::Table { birth, death, tail } => {
                let len = birth.len();
                match usize::try_from(i) {
                    Ok(k) if k < len => (birth[k], death[k]),
                    _ => match tail {
                        TailRule::Error => return Err(Error::BeyondTable { state: i, len }),
                        TailRule::Constant => (birth[len - 1], death[len - 1]),
                    },
                }
            }
        })
    }

    #[inline]
    pub fn birth(&self, i: u64) -> Result<f64> {
        self.rates(i).map(|r| r.0)
    }

    #[inline]
    pub fn death(&self, i: u64) -> Result<f64> {
        self.rates(i).map(|r| r.1)
    }

    /// Largest state with a defined rate, if the model is bounded.
    pub fn max_state(&self) -> Option<u64> {
        match &self.family {
            Family::Table {
                birth,
                tail: TailRule::Error,
                ..
            } => Some(birth.len() as u64 - 1),
            _ => None,
        }
    }

    /// Fails with [`Error::InvalidModel`] listing every violated invariant.
    pub fn require_valid(&self) -> Result<()> {
        let report = validate(self);
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidModel(report.errors.join("; ")))
        }
    }

    /// Closed-form verdict on whether the absorption series diverges
    /// (absorption is certain). `None` when it cannot be decided from the
    /// family alone.
    pub fn absorption_certain(&self) -> Option<bool> {
        match &self.family {
            Family::Power { b, d, .. } => Some(d >= b),
            Family::Logistic { .. } | Family::Example3 => Some(true),
            Family::ConstantTail { b, d, .. } => Some(d >= b),
            Family::Table { birth, death, tail } => match tail {
                TailRule::Constant => Some(death[death.len() - 1] >= birth[birth.len() - 1]),
                TailRule::Error => None,
            },
        }
    }
}

impl fmt::Display for BirthDeathModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

fn get(params: &Params, key: &str) -> Result<f64> {
    let v = *params
        .get(key)
        .ok_or_else(|| Error::param(key, "missing"))?;
    if !v.is_finite() {
        return Err(Error::param(key, "must be finite"));
    }
    Ok(v)
}

fn positive(params: &Params, key: &str) -> Result<f64> {
    let v = get(params, key)?;
    if v <= 0.0 {
        return Err(Error::param(key, "must be positive"));
    }
    Ok(v)
}

fn reject_unknown(params: &Params, allowed: &[&str]) -> Result<()> {
    match params.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(Error::param(k, "not a parameter of this family")),
        None => Ok(()),
    }
}

/// Build one of the built-in families.
///
/// Families: `power {b, d, a}`, `linear {b, d}`, `logistic {b, c, d}`,
/// `constant_tail {b1, d1, b, d}` and `example3 {}`. Parameters must be
/// positive and finite; choices outside the well-behaved regime (for example
/// `b >= d`) are accepted and surface as warnings from [`validate`].
pub fn named_model(family: &str, params: &Params) -> Result<BirthDeathModel> {
    let (name, family) = match family {
        "power" => {
            reject_unknown(params, &["b", "d", "a"])?;
            let (b, d, a) = (positive(params, "b")?, positive(params, "d")?, positive(params, "a")?);
            (format!("power(b={b},d={d},a={a})"), Family::Power { b, d, a })
        }
        "linear" => {
            reject_unknown(params, &["b", "d"])?;
            let (b, d) = (positive(params, "b")?, positive(params, "d")?);
            (format!("linear(b={b},d={d})"), Family::Power { b, d, a: 1.0 })
        }
        "logistic" => {
            reject_unknown(params, &["b", "c", "d"])?;
            let (b, c, d) = (positive(params, "b")?, positive(params, "c")?, positive(params, "d")?);
            (format!("logistic(b={b},c={c},d={d})"), Family::Logistic { b, c, d })
        }
        "constant_tail" => {
            reject_unknown(params, &["b1", "d1", "b", "d"])?;
            let b1 = positive(params, "b1")?;
            let d1 = positive(params, "d1")?;
            let (b, d) = (positive(params, "b")?, positive(params, "d")?);
            (
                format!("constant_tail(b1={b1},d1={d1},b={b},d={d})"),
                Family::ConstantTail { b1, d1, b, d },
            )
        }
        "example3" => {
            reject_unknown(params, &[])?;
            ("example3".to_string(), Family::Example3)
        }
        other => return Err(Error::UnknownFamily(other.to_string())),
    };
    Ok(BirthDeathModel { name, family })
}

/// Shorthand for `linear(b, d)`; panics on non-positive rates.
pub fn linear(b: f64, d: f64) -> BirthDeathModel {
    named_model("linear", &Params::from([("b".into(), b), ("d".into(), d)]))
        .expect("linear rates must be positive")
}

/// Shorthand for `logistic(b, c, d)`; panics on non-positive rates.
pub fn logistic(b: f64, c: f64, d: f64) -> BirthDeathModel {
    named_model(
        "logistic",
        &Params::from([("b".into(), b), ("c".into(), c), ("d".into(), d)]),
    )
    .expect("logistic rates must be positive")
}

/// Shorthand for `power(b, d, a)`; panics on non-positive parameters.
pub fn power(b: f64, d: f64, a: f64) -> BirthDeathModel {
    named_model(
        "power",
        &Params::from([("b".into(), b), ("d".into(), d), ("a".into(), a)]),
    )
    .expect("power parameters must be positive")
}

pub fn example3() -> BirthDeathModel {
    named_model("example3", &Params::new()).expect("example3 has no parameters")
}

/// Check every model invariant and collect all violations.
pub fn validate(model: &BirthDeathModel) -> ValidationReport {
    let mut report = ValidationReport::default();
    match model.rates(0) {
        Ok((b0, d0)) if b0 != 0.0 || d0 != 0.0 => report
            .errors
            .push(format!("state 0 must be absorbing (b_0 = {b0}, d_0 = {d0})")),
        _ => {}
    }
    let scan = match &model.family {
        Family::Table { birth, .. } => birth.len() as u64 - 1,
        _ => CLOSED_FORM_SCAN,
    };
    for i in 1..=scan {
        let Ok((b, d)) = model.rates(i) else { break };
        if !b.is_finite() || !d.is_finite() {
            report.errors.push(format!("non-finite rate at i={i}"));
            continue;
        }
        if b <= 0.0 {
            let what = if b == 0.0 { "zero" } else { "negative" };
            report.errors.push(format!("birth rate {what} at i={i}"));
        }
        if d <= 0.0 {
            let what = if d == 0.0 { "zero" } else { "negative" };
            report.errors.push(format!("death rate {what} at i={i}"));
        }
    }
    match &model.family {
        Family::Power { b, d, .. } if b >= d => report
            .warnings
            .push(format!("b = {b} >= d = {d}: outside the subcritical regime")),
        Family::ConstantTail { d1, b, d, .. } => {
            if b >= d {
                report
                    .warnings
                    .push(format!("b = {b} >= d = {d}: outside the subcritical regime"));
            }
            let gap = (d.sqrt() - b.sqrt()).powi(2);
            if gap <= *d1 {
                report.warnings.push(format!(
                    "(sqrt(d) - sqrt(b))^2 = {gap} <= d1 = {d1}: the sqrt-ratio Lyapunov function does not certify this model"
                ));
            }
        }
        _ => {}
    }
    report
}

/// Partial sum `sum_{k=1}^{n} (d_1 ... d_k) / (b_1 ... b_k)` of the series
/// whose divergence characterises certain absorption. Accumulated in log
/// space.
pub fn absorption_series_partial(model: &BirthDeathModel, n: usize) -> Result<f64> {
    model.require_valid()?;
    if n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    let mut log_term = 0.0;
    let mut sum = LogSum::new();
    for k in 1..=n as u64 {
        let (b, d) = model.rates(k)?;
        log_term += d.ln() - b.ln();
        sum.add_ln(log_term);
    }
    let total = sum.value();
    if !total.is_finite() {
        return Err(Error::Overflow("absorption series".into()));
    }
    Ok(total)
}

/// Model description as read from a config file.
///
/// ```toml
/// family = "logistic"
/// b = 2.0
/// c = 1.0
/// d = 1.0
/// ```
///
/// or, for explicit tables indexed from state 0,
///
/// ```toml
/// family = "table"
/// birth = [0.0, 1.0, 2.0]
/// death = [0.0, 2.0, 4.0]
/// tail = "constant"
/// ```
pub fn model_from_toml(value: &toml::Table) -> Result<BirthDeathModel> {
    let family = value
        .get("family")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::Config("missing string field `family`".into()))?;
    if family == "table" {
        let array = |key: &str| -> Result<Vec<f64>> {
            let arr = value
                .get(key)
                .and_then(|v| v.as_array())
                .ok_or_else(|| Error::Config(format!("table model needs numeric array `{key}`")))?;
            arr.iter()
                .enumerate()
                .map(|(i, v)| {
                    v.as_float()
                        .or_else(|| v.as_integer().map(|x| x as f64))
                        .ok_or_else(|| Error::Config(format!("`{key}[{i}]` is not a number")))
                })
                .collect()
        };
        let tail = match value.get("tail").map(|v| v.as_str()) {
            None => TailRule::Error,
            Some(Some("error")) => TailRule::Error,
            Some(Some("constant")) => TailRule::Constant,
            Some(_) => {
                return Err(Error::Config(
                    "`tail` must be \"error\" or \"constant\"".into(),
                ))
            }
        };
        let name = value
            .get("name")
            .and_then(|v| v.as_str())
            .unwrap_or("table")
            .to_string();
        return BirthDeathModel::from_table(name, array("birth")?, array("death")?, tail);
    }
    let mut params = Params::new();
    for (k, v) in value {
        if k == "family" || k == "name" {
            continue;
        }
        let x = v
            .as_float()
            .or_else(|| v.as_integer().map(|x| x as f64))
            .ok_or_else(|| Error::Config(format!("model field `{k}` must be numeric")))?;
        params.insert(k.clone(), x);
    }
    let mut model = named_model(family, &params)?;
    if let Some(name) = value.get("name").and_then(|v| v.as_str()) {
        model.name = name.to_string();
    }
    Ok(model)
}
