//! Flat `key = value` configuration.
//!
//! Files hold one assignment per line; `#` starts a comment. Command-line
//! flags are merged on top as another set of assignments. Unknown keys are
//! rejected.

use std::collections::BTreeMap;
use std::fmt;

use cdnsim_core::{ChangeModel, ConfigError, LearnSpec, PolicyKind, SimConfig};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::harness::{ExperimentSpec, Sweep};

pub const SIM_KEYS: &[&str] = &[
    "n",
    "alpha",
    "lambda_bar",
    "beta",
    "horizon",
    "change_model",
    "block_period",
    "nu",
    "policy",
    "learn_time",
    "learn_arrivals",
    "seed",
    "trace",
];

pub const EXPERIMENT_KEYS: &[&str] = &[
    "replications",
    "static_replications",
    "policies",
    "sweep_param",
    "sweep_values",
];

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("{key} has invalid value {value:?}: {reason}")]
    Value { key: String, value: String, reason: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

fn bad(key: &str, value: &str, reason: impl fmt::Display) -> ParamError {
    ParamError::Value { key: key.into(), value: value.into(), reason: reason.to_string() }
}

/// Raw assignments, later ones overriding earlier ones.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Params {
    values: BTreeMap<String, String>,
}

impl Params {
    pub fn parse(text: &str) -> Result<Params, ParamError> {
        let mut p = Params::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ParamError::Syntax { line: i + 1, text: raw.to_string() })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(ParamError::Syntax { line: i + 1, text: raw.to_string() });
            }
            p.set(k, v.trim())?;
        }
        Ok(p)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ParamError> {
        if !SIM_KEYS.contains(&key) && !EXPERIMENT_KEYS.contains(&key) {
            return Err(ParamError::UnknownKey(key.to_string()));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// `other` takes precedence.
    pub fn merged(mut self, other: &Params) -> Params {
        for (k, v) in &other.values {
            self.values.insert(k.clone(), v.clone());
        }
        self
    }

    fn num<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, ParamError>
    where
        T::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| bad(key, v, e)),
        }
    }

    fn learn_override(&self) -> Result<Option<LearnSpec>, ParamError> {
        match (self.get("learn_time"), self.get("learn_arrivals")) {
            (Some(_), Some(_)) => Err(bad("learn_time", "", "conflicts with learn_arrivals")),
            (Some(_), None) => Ok(Some(LearnSpec::Duration(self.num("learn_time", 0.0)?))),
            (None, Some(_)) => Ok(Some(LearnSpec::ArrivalCount(self.num("learn_arrivals", 0)?))),
            (None, None) => Ok(None),
        }
    }

    /// A policy name; `learn_time`/`learn_arrivals` fill in the learning
    /// phase of static policies that do not give one inline.
    fn policy(&self, key: &str, text: &str) -> Result<PolicyKind, ParamError> {
        let mut p: PolicyKind = text.parse().map_err(|e: ConfigError| bad(key, text, e.constraint))?;
        if let (PolicyKind::StaticLearning { learn, .. }, false) = (&mut p, text.contains('@')) {
            if let Some(l) = self.learn_override()? {
                *learn = l;
            }
        }
        Ok(p)
    }

    /// The run configuration, validated.
    pub fn sim_config(&self) -> Result<SimConfig, ParamError> {
        let d = SimConfig::default();
        let change_model = match self.get("change_model").unwrap_or("none") {
            "none" => ChangeModel::None,
            "block" => ChangeModel::Block { period: self.num("block_period", 1.0)? },
            "continuous" => ChangeModel::Continuous { nu: self.num("nu", 1.0)? },
            other => return Err(bad("change_model", other, "expected none, block or continuous")),
        };
        let policy = match self.get("policy") {
            Some(p) => self.policy("policy", p)?,
            None => d.policy,
        };
        let trace = match self.get("trace") {
            None => d.trace,
            Some("true" | "1" | "yes") => true,
            Some("false" | "0" | "no") => false,
            Some(v) => return Err(bad("trace", v, "expected true or false")),
        };
        let c = SimConfig {
            n: self.num("n", d.n)?,
            alpha: self.num("alpha", d.alpha)?,
            lambda_bar: self.num("lambda_bar", d.lambda_bar)?,
            beta: self.num("beta", d.beta)?,
            horizon: self.num("horizon", d.horizon)?,
            change_model,
            policy,
            seed: self.num("seed", d.seed)?,
            trace,
        };
        c.validate()?;
        Ok(c)
    }

    /// An experiment: the run configuration plus `policies` (default: all
    /// four), `replications` (default 100) and an optional sweep.
    pub fn experiment(&self) -> Result<ExperimentSpec, ParamError> {
        let base = self.sim_config()?;
        let policies = match self.get("policies") {
            Some(list) => list
                .split(',')
                .map(|p| self.policy("policies", p.trim()))
                .collect::<Result<Vec<_>, _>>()?,
            None => {
                let learn = self.learn_override()?.unwrap_or(LearnSpec::ArrivalCount(100));
                vec![
                    PolicyKind::Genie,
                    PolicyKind::Myopic,
                    PolicyKind::empirical(learn),
                    PolicyKind::good_turing(learn),
                ]
            }
        };
        let replications = self.num("replications", 100usize)?;
        if replications == 0 {
            return Err(bad("replications", "0", "must be at least 1"));
        }
        let static_replications = match self.get("static_replications") {
            None => None,
            Some(_) => Some(self.num("static_replications", 0usize)?),
        };
        let sweep = match (self.get("sweep_param"), self.get("sweep_values")) {
            (None | Some("none"), None) => Sweep::None,
            (Some(p), Some(v)) => Sweep::parse(p, v).map_err(|e| bad("sweep_values", v, e))?,
            (Some(p), None) => return Err(bad("sweep_param", p, "sweep_values missing")),
            (None, Some(v)) => return Err(bad("sweep_values", v, "sweep_param missing")),
        };
        let spec = ExperimentSpec { base, policies, replications, static_replications, sweep };
        spec.validate().map_err(|e| bad("experiment", "", e))?;
        Ok(spec)
    }
}

/// The resolved run configuration as a JSON object keyed like the file format.
pub fn config_to_json(c: &SimConfig) -> Value {
    let mut m = Map::new();
    m.insert("n".into(), json!(c.n));
    m.insert("alpha".into(), json!(c.alpha));
    m.insert("lambda_bar".into(), json!(c.lambda_bar));
    m.insert("beta".into(), json!(c.beta));
    m.insert("horizon".into(), json!(c.horizon));
    match c.change_model {
        ChangeModel::None => {
            m.insert("change_model".into(), json!("none"));
        }
        ChangeModel::Block { period } => {
            m.insert("change_model".into(), json!("block"));
            m.insert("block_period".into(), json!(period));
        }
        ChangeModel::Continuous { nu } => {
            m.insert("change_model".into(), json!("continuous"));
            m.insert("nu".into(), json!(nu));
        }
    }
    m.insert("policy".into(), json!(c.policy.to_string()));
    m.insert("seed".into(), json!(c.seed));
    m.insert("trace".into(), json!(c.trace));
    Value::Object(m)
}

/// Reads an object produced by [`config_to_json`] (or any object using the
/// same keys).
pub fn config_from_json(v: &Value) -> Result<SimConfig, ParamError> {
    let obj = v.as_object().ok_or_else(|| bad("config", &v.to_string(), "expected an object"))?;
    let mut p = Params::default();
    for (k, v) in obj {
        let text = match v {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        p.set(k, &text)?;
    }
    p.sim_config()
}

/// The experiment description as JSON.
pub fn experiment_to_json(spec: &ExperimentSpec) -> Value {
    let values: Vec<f64> = (0..spec.sweep.len()).map(|i| spec.sweep.value(i)).collect();
    json!({
        "config": config_to_json(&spec.base),
        "policies": spec.policies.iter().map(|p| p.to_string()).collect::<Vec<_>>(),
        "replications": spec.replications,
        "static_replications": spec.static_replications,
        "sweep_param": spec.sweep.param(),
        "sweep_values": if spec.sweep == Sweep::None { json!([]) } else { json!(values) },
    })
}
