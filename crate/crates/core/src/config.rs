//! Run parameters.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::ConfigError;

/// How popularity ranks evolve during a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ChangeModel {
    None,
    /// Ranks are redrawn uniformly at random every `period` time units.
    Block { period: f64 },
    /// Every content carries a Poisson clock of rate `nu`; a tick swaps its
    /// rank with a uniformly chosen other content.
    Continuous { nu: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimatorKind {
    Empirical,
    GoodTuring,
}

/// Length of the learning phase of a static policy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LearnSpec {
    /// Learn for a fixed time.
    Duration(f64),
    /// Learn for the time in which `count` arrivals are expected,
    /// i.e. `count / (n * lambda_bar)`.
    ArrivalCount(u64),
}

impl LearnSpec {
    pub fn duration(&self, n: usize, lambda_bar: f64) -> f64 {
        match *self {
            LearnSpec::Duration(d) => d,
            LearnSpec::ArrivalCount(k) => k as f64 / (n as f64 * lambda_bar),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PolicyKind {
    Myopic,
    Genie,
    StaticLearning {
        estimator: EstimatorKind,
        learn: LearnSpec,
    },
}

impl PolicyKind {
    pub fn empirical(learn: LearnSpec) -> Self {
        PolicyKind::StaticLearning {
            estimator: EstimatorKind::Empirical,
            learn,
        }
    }

    pub fn good_turing(learn: LearnSpec) -> Self {
        PolicyKind::StaticLearning {
            estimator: EstimatorKind::GoodTuring,
            learn,
        }
    }

    /// Short name without the learning parameter.
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Myopic => "myopic",
            PolicyKind::Genie => "genie",
            PolicyKind::StaticLearning {
                estimator: EstimatorKind::Empirical,
                ..
            } => "empirical",
            PolicyKind::StaticLearning {
                estimator: EstimatorKind::GoodTuring,
                ..
            } => "good-turing",
        }
    }

    pub fn is_static(&self) -> bool {
        matches!(self, PolicyKind::StaticLearning { .. })
    }
}

/// `myopic`, `genie`, `empirical@t=0.1`, `good-turing@arrivals=100`.
impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::StaticLearning { learn, .. } => match learn {
                LearnSpec::Duration(d) => write!(f, "{}@t={}", self.name(), d),
                LearnSpec::ArrivalCount(k) => write!(f, "{}@arrivals={}", self.name(), k),
            },
            _ => f.write_str(self.name()),
        }
    }
}

impl core::str::FromStr for PolicyKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (name, learn) = match s.split_once('@') {
            Some((name, learn)) => (name, Some(learn)),
            None => (s, None),
        };
        let learn = match learn {
            None => LearnSpec::ArrivalCount(100),
            Some(l) => {
                let bad = || ConfigError::new("policy", format!("has malformed learning spec `{l}`"));
                match l.split_once('=') {
                    Some(("t", v)) => LearnSpec::Duration(v.parse().map_err(|_| bad())?),
                    Some(("arrivals", v)) => LearnSpec::ArrivalCount(v.parse().map_err(|_| bad())?),
                    _ => return Err(bad()),
                }
            }
        };
        match name {
            "myopic" | "genie" if s.contains('@') => Err(ConfigError::new(
                "policy",
                format!("`{name}` takes no learning spec"),
            )),
            "myopic" => Ok(PolicyKind::Myopic),
            "genie" => Ok(PolicyKind::Genie),
            "empirical" | "empirical-static" => Ok(PolicyKind::empirical(learn)),
            "good-turing" | "good-turing-static" => Ok(PolicyKind::good_turing(learn)),
            other => Err(ConfigError::new(
                "policy",
                format!("must be one of myopic, genie, empirical, good-turing (got `{other}`)"),
            )),
        }
    }
}

/// Full parameterization of one simulation run.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    /// Number of front-end servers.
    pub n: usize,
    /// Contents per server; the catalog holds `ceil(alpha * n)` contents.
    pub alpha: f64,
    /// Total arrival rate divided by `n`.
    pub lambda_bar: f64,
    /// Zipf exponent.
    pub beta: f64,
    /// Simulated interval `[0, horizon]`.
    pub horizon: f64,
    pub change_model: ChangeModel,
    pub policy: PolicyKind,
    pub seed: u64,
    /// Record a per-event trace.
    pub trace: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 500,
            alpha: 2.0,
            lambda_bar: 0.9,
            beta: 1.2,
            horizon: 5.0,
            change_model: ChangeModel::None,
            policy: PolicyKind::Myopic,
            seed: 42,
            trace: false,
        }
    }
}

impl SimConfig {
    /// Catalog size `ceil(alpha * n)`.
    pub fn m(&self) -> usize {
        libm::ceil(self.alpha * self.n as f64) as usize
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n < 1 {
            return Err(ConfigError::new("n", "must be at least 1"));
        }
        if !(self.alpha > 1.0) || !self.alpha.is_finite() {
            return Err(ConfigError::new("alpha", "must exceed 1"));
        }
        if !(self.lambda_bar > 0.0) || !self.lambda_bar.is_finite() {
            return Err(ConfigError::new("lambda_bar", "must be positive"));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(ConfigError::new("beta", "must be positive"));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(ConfigError::new("horizon", "must be positive"));
        }
        match self.change_model {
            ChangeModel::Block { period } if !(period > 0.0) => {
                return Err(ConfigError::new("block_period", "must be positive"))
            }
            ChangeModel::Continuous { nu } if !(nu >= 0.0) || !nu.is_finite() => {
                return Err(ConfigError::new("nu", "must be non-negative"))
            }
            _ => {}
        }
        if let PolicyKind::StaticLearning { learn, .. } = self.policy {
            match learn {
                LearnSpec::Duration(d) if !(d > 0.0) || !d.is_finite() => {
                    return Err(ConfigError::new("learn_time", "must be positive"))
                }
                LearnSpec::ArrivalCount(0) => {
                    return Err(ConfigError::new("learn_arrivals", "must be positive"))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Conditions that are simulated but fall outside the modelled regime.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.lambda_bar >= 1.0 {
            out.push(format!(
                "lambda_bar = {} is not below 1; the system is overloaded",
                self.lambda_bar
            ));
        }
        if let PolicyKind::StaticLearning { learn, .. } = self.policy {
            let d = learn.duration(self.n, self.lambda_bar);
            if d >= self.horizon {
                out.push(format!(
                    "learning phase ({d}) reaches the horizon ({}); the whole run is learning",
                    self.horizon
                ));
            }
        }
        out
    }
}
