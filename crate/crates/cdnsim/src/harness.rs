//! Replicated experiments over paired workloads.

use std::fmt;

use cdnsim_core::rng::derive_seed;
use cdnsim_core::{PolicyKind, RunMetrics, SimConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error(transparent)]
    Config(#[from] cdnsim_core::ConfigError),
    #[error("run failed (policy {policy}, {param} = {value}, seed {seed}): {source}")]
    Run {
        policy: String,
        param: &'static str,
        value: f64,
        seed: u64,
        #[source]
        source: cdnsim_core::Error,
    },
    #[error("workload mismatch between policies at {param} = {value}, replication {rep}")]
    Unpaired { param: &'static str, value: f64, rep: usize },
    #[error("insufficient data: {usable} usable points, need at least 3")]
    InsufficientData { usable: usize },
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Parameter varied across an experiment.
#[derive(Clone, Debug, PartialEq)]
pub enum Sweep {
    None,
    N(Vec<usize>),
    Beta(Vec<f64>),
    LambdaBar(Vec<f64>),
}

impl Sweep {
    pub fn param(&self) -> &'static str {
        match self {
            Sweep::None => "none",
            Sweep::N(_) => "n",
            Sweep::Beta(_) => "beta",
            Sweep::LambdaBar(_) => "lambda_bar",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Sweep::None => 1,
            Sweep::N(v) => v.len(),
            Sweep::Beta(v) | Sweep::LambdaBar(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The swept value at `i` as a number; `none` reports 0.
    pub fn value(&self, i: usize) -> f64 {
        match self {
            Sweep::None => 0.0,
            Sweep::N(v) => v[i] as f64,
            Sweep::Beta(v) | Sweep::LambdaBar(v) => v[i],
        }
    }

    /// `base` with the `i`-th swept value applied.
    pub fn apply(&self, base: &SimConfig, i: usize) -> SimConfig {
        let mut c = base.clone();
        match self {
            Sweep::None => {}
            Sweep::N(v) => c.n = v[i],
            Sweep::Beta(v) => c.beta = v[i],
            Sweep::LambdaBar(v) => c.lambda_bar = v[i],
        }
        c
    }

    /// Parses a parameter name and comma-separated values.
    pub fn parse(param: &str, values: &str) -> Result<Sweep, String> {
        let floats = || -> Result<Vec<f64>, String> {
            values
                .split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|e| format!("sweep value {v:?}: {e}")))
                .collect()
        };
        match param {
            "none" | "" => Ok(Sweep::None),
            "n" => values
                .split(',')
                .map(|v| v.trim().parse::<usize>().map_err(|e| format!("sweep value {v:?}: {e}")))
                .collect::<Result<_, _>>()
                .map(Sweep::N),
            "beta" => floats().map(Sweep::Beta),
            "lambda_bar" => floats().map(Sweep::LambdaBar),
            other => Err(format!("unknown sweep parameter {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub base: SimConfig,
    pub policies: Vec<PolicyKind>,
    pub replications: usize,
    /// Replications for learn-then-freeze policies, if different.
    pub static_replications: Option<usize>,
    pub sweep: Sweep,
}

impl ExperimentSpec {
    pub fn new(base: SimConfig, policies: Vec<PolicyKind>, replications: usize, sweep: Sweep) -> Self {
        ExperimentSpec { base, policies, replications, static_replications: None, sweep }
    }

    pub fn replications_for(&self, policy: &PolicyKind) -> usize {
        match self.static_replications {
            Some(r) if policy.is_static() => r,
            _ => self.replications,
        }
    }

    /// Seed of replication `rep`, shared by every policy and sweep point.
    pub fn seed_for(&self, rep: usize) -> u64 {
        derive_seed(self.base.seed, 0, rep as u64)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.policies.is_empty() {
            return Err(HarnessError::Invalid("no policies".into()));
        }
        if self.replications == 0 || self.static_replications == Some(0) {
            return Err(HarnessError::Invalid("replications must be at least 1".into()));
        }
        if self.sweep.is_empty() {
            return Err(HarnessError::Invalid("sweep has no values".into()));
        }
        for i in 0..self.sweep.len() {
            if !(self.sweep.value(i) > 0.0) && self.sweep != Sweep::None {
                return Err(HarnessError::Invalid("sweep values must be positive".into()));
            }
            for p in &self.policies {
                let mut c = self.sweep.apply(&self.base, i);
                c.policy = *p;
                c.validate()?;
            }
        }
        Ok(())
    }
}

/// Per-run numbers kept for summaries and paired comparisons.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub seed: u64,
    pub served_fraction: f64,
    pub arrivals: u64,
    pub deferred: u64,
    pub external_fetches: u64,
    pub internal_fetches: u64,
    pub degenerate: bool,
    pub workload_checksum: u64,
}

impl Outcome {
    pub fn from_metrics(seed: u64, m: &RunMetrics) -> Self {
        Outcome {
            seed,
            served_fraction: m.served_fraction(),
            arrivals: m.arrivals,
            deferred: m.deferred,
            external_fetches: m.external_fetches,
            internal_fetches: m.internal_fetches,
            degenerate: m.degenerate_estimate.is_some(),
            workload_checksum: m.workload_checksum,
        }
    }
}

/// All runs of one policy at one sweep point.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub policy: PolicyKind,
    pub point: usize,
    pub sweep_value: f64,
    pub outcomes: Vec<Outcome>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub spec: ExperimentSpec,
    pub cells: Vec<Cell>,
}

impl Experiment {
    pub fn cell(&self, policy: &PolicyKind, point: usize) -> Option<&Cell> {
        self.cells.iter().find(|c| &c.policy == policy && c.point == point)
    }

    /// Summary rows ordered by policy (as listed), then sweep value ascending.
    pub fn rows(&self) -> Vec<SummaryRow> {
        let mut rows: Vec<(usize, SummaryRow)> = self
            .cells
            .iter()
            .map(|c| {
                let order = self.spec.policies.iter().position(|p| p == &c.policy).unwrap_or(usize::MAX);
                (order, SummaryRow::from_cell(c, self.spec.sweep.param(), self.spec.base.seed))
            })
            .collect();
        rows.sort_by(|(pa, a), (pb, b)| pa.cmp(pb).then(a.sweep_value.total_cmp(&b.sweep_value)));
        rows.into_iter().map(|(_, r)| r).collect()
    }
}

/// Sample mean, sample standard deviation and standard error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub se: f64,
}

impl Moments {
    /// Two-pass moments. A single sample has `std = 0`.
    pub fn of(xs: &[f64]) -> Moments {
        let count = xs.len();
        if count == 0 {
            return Moments::default();
        }
        let n = count as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if count < 2 {
            0.0
        } else {
            let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
            let corr: f64 = xs.iter().map(|x| x - mean).sum();
            ((ss - corr * corr / n) / (n - 1.0)).max(0.0).sqrt()
        };
        Moments { count, mean, std, se: std / n.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy: String,
    pub sweep_param: String,
    pub sweep_value: f64,
    pub mean_served_fraction: f64,
    pub std_served_fraction: f64,
    pub se_served_fraction: f64,
    pub mean_deferred: f64,
    pub se_deferred: f64,
    pub mean_external_fetches: f64,
    pub se_external_fetches: f64,
    pub mean_internal_fetches: f64,
    pub se_internal_fetches: f64,
    pub replications: usize,
    pub seed: u64,
    /// Set when R = 1 and the standard deviation is zero by convention.
    pub single_sample: bool,
    pub degenerate_runs: usize,
}

impl SummaryRow {
    pub fn from_cell(cell: &Cell, sweep_param: &str, seed: u64) -> SummaryRow {
        let col = |f: fn(&Outcome) -> f64| Moments::of(&cell.outcomes.iter().map(f).collect::<Vec<_>>());
        let served = col(|o| o.served_fraction);
        let deferred = col(|o| o.deferred as f64);
        let ext = col(|o| o.external_fetches as f64);
        let int = col(|o| o.internal_fetches as f64);
        SummaryRow {
            policy: cell.policy.to_string(),
            sweep_param: sweep_param.to_string(),
            sweep_value: cell.sweep_value,
            mean_served_fraction: served.mean,
            std_served_fraction: served.std,
            se_served_fraction: served.se,
            mean_deferred: deferred.mean,
            se_deferred: deferred.se,
            mean_external_fetches: ext.mean,
            se_external_fetches: ext.se,
            mean_internal_fetches: int.mean,
            se_internal_fetches: int.se,
            replications: cell.outcomes.len(),
            seed,
            single_sample: cell.outcomes.len() == 1,
            degenerate_runs: cell.outcomes.iter().filter(|o| o.degenerate).count(),
        }
    }
}

/// Runs every (policy, sweep point, replication) and checks that all
/// policies saw the same workload. `jobs` caps the worker threads.
pub fn replicate(spec: &ExperimentSpec, jobs: Option<usize>) -> Result<Experiment, HarnessError> {
    spec.validate()?;
    let mut tasks = Vec::new();
    for point in 0..spec.sweep.len() {
        for (pi, policy) in spec.policies.iter().enumerate() {
            for rep in 0..spec.replications_for(policy) {
                tasks.push((pi, point, rep));
            }
        }
    }
    let run_one = |&(pi, point, rep): &(usize, usize, usize)| -> Result<Outcome, HarnessError> {
        let policy = &spec.policies[pi];
        let mut config = spec.sweep.apply(&spec.base, point);
        config.policy = *policy;
        config.trace = false;
        config.seed = spec.seed_for(rep);
        cdnsim_core::run(&config)
            .map(|m| Outcome::from_metrics(config.seed, &m))
            .map_err(|source| HarnessError::Run {
                policy: policy.to_string(),
                param: spec.sweep.param(),
                value: spec.sweep.value(point),
                seed: config.seed,
                source,
            })
    };
    let outcomes: Result<Vec<Outcome>, HarnessError> = match jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| HarnessError::Pool(e.to_string()))?
            .install(|| tasks.par_iter().map(run_one).collect()),
        None => tasks.par_iter().map(run_one).collect(),
    };
    let outcomes = outcomes?;

    let mut cells: Vec<Cell> = Vec::new();
    for (&(pi, point, _), o) in tasks.iter().zip(outcomes) {
        let policy = &spec.policies[pi];
        match cells.last_mut() {
            Some(c) if &c.policy == policy && c.point == point => c.outcomes.push(o),
            _ => cells.push(Cell {
                policy: *policy,
                point,
                sweep_value: spec.sweep.value(point),
                outcomes: vec![o],
            }),
        }
    }
    check_paired(spec, &cells)?;
    Ok(Experiment { spec: spec.clone(), cells })
}

fn check_paired(spec: &ExperimentSpec, cells: &[Cell]) -> Result<(), HarnessError> {
    for point in 0..spec.sweep.len() {
        let at: Vec<&Cell> = cells.iter().filter(|c| c.point == point).collect();
        let Some(first) = at.first() else { continue };
        for other in &at[1..] {
            for (rep, (a, b)) in first.outcomes.iter().zip(&other.outcomes).enumerate() {
                if a.workload_checksum != b.workload_checksum {
                    return Err(HarnessError::Unpaired {
                        param: spec.sweep.param(),
                        value: spec.sweep.value(point),
                        rep,
                    });
                }
            }
        }
    }
    Ok(())
}

/// Log-log least squares fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    /// 95% confidence interval for the slope.
    pub lo: f64,
    pub hi: f64,
    pub points_used: usize,
    /// Points dropped because y was not positive.
    pub dropped: usize,
}

impl ExponentFit {
    pub fn overlaps(&self, other: &ExponentFit) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

impl fmt::Display for ExponentFit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "slope {:.4} [{:.4}, {:.4}]", self.slope, self.lo, self.hi)
    }
}

/// Fits `log y = a + b log x` by ordinary least squares and returns `b` with
/// a Student-t 95% interval. Points with `y <= 0` are dropped.
pub fn fit_exponent(points: &[(f64, f64)]) -> Result<ExponentFit, HarnessError> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(x, y)| x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())
        .map(|&(x, y)| (x.ln(), y.ln()))
        .collect();
    let dropped = points.len() - usable.len();
    if dropped > 0 {
        log::warn!("fit_exponent: dropped {dropped} non-positive points");
    }
    let k = usable.len();
    if k < 3 {
        return Err(HarnessError::InsufficientData { usable: k });
    }
    let n = k as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / n;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(HarnessError::Invalid("all x values equal".into()));
    }
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = usable.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let se = (sse / (n - 2.0) / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, n - 2.0).expect("df >= 1").inverse_cdf(0.975);
    Ok(ExponentFit {
        slope,
        intercept,
        lo: slope - t * se,
        hi: slope + t * se,
        points_used: k,
        dropped,
    })
}

/// Empirical CDF as sorted (value, cumulative fraction) steps.
pub fn ecdf(values: &[u64]) -> Vec<(u64, f64)> {
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len() as f64;
    let mut out: Vec<(u64, f64)> = Vec::new();
    for (i, &x) in v.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 = frac,
            _ => out.push((x, frac)),
        }
    }
    out
}

/// Paired comparison of deferred counts, P against Q.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dominance {
    pub mean_p: f64,
    pub mean_q: f64,
    /// Mean of Q minus P over paired runs.
    pub diff_mean: f64,
    pub diff_se: f64,
    pub strict: bool,
    pub pass: bool,
    pub ecdf_p: Vec<(u64, f64)>,
    pub ecdf_q: Vec<(u64, f64)>,
}

/// Whether P defers no more than Q on average; with `strict`, the paired
/// difference must also exceed three standard errors.
pub fn dominance_from(p: &[Outcome], q: &[Outcome], strict: bool) -> Dominance {
    let k = p.len().min(q.len());
    let dp: Vec<u64> = p[..k].iter().map(|o| o.deferred).collect();
    let dq: Vec<u64> = q[..k].iter().map(|o| o.deferred).collect();
    let diffs: Vec<f64> = dp.iter().zip(&dq).map(|(&a, &b)| b as f64 - a as f64).collect();
    let d = Moments::of(&diffs);
    let mean_p = Moments::of(&dp.iter().map(|&x| x as f64).collect::<Vec<_>>()).mean;
    let mean_q = Moments::of(&dq.iter().map(|&x| x as f64).collect::<Vec<_>>()).mean;
    let pass = mean_p <= mean_q && (!strict || d.mean > 3.0 * d.se);
    Dominance {
        mean_p,
        mean_q,
        diff_mean: d.mean,
        diff_se: d.se,
        strict,
        pass,
        ecdf_p: ecdf(&dp),
        ecdf_q: ecdf(&dq),
    }
}

/// Runs P and Q on `replications` shared workloads from `base` and compares
/// their deferred counts.
pub fn dominance_check(
    base: &SimConfig,
    p: &PolicyKind,
    q: &PolicyKind,
    replications: usize,
    strict: bool,
) -> Result<Dominance, HarnessError> {
    let mut policies = vec![*p];
    if q != p {
        policies.push(*q);
    }
    let spec = ExperimentSpec::new(base.clone(), policies, replications, Sweep::None);
    let exp = replicate(&spec, None)?;
    let a = &exp.cell(p, 0).expect("policy cell").outcomes;
    let b = &exp.cell(q, 0).expect("policy cell").outcomes;
    Ok(dominance_from(a, b, strict))
}

/// Paired difference of served fraction, A minus B: (mean, standard error).
pub fn paired_served_gap(a: &[Outcome], b: &[Outcome]) -> (f64, f64) {
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x.served_fraction - y.served_fraction).collect();
    let m = Moments::of(&diffs);
    (m.mean, m.se)
}
