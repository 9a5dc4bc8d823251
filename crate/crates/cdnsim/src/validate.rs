//! Invariant suites over full simulation traces and the estimator and
//! allocation building blocks.

use cdnsim_core::engine::Decision;
use cdnsim_core::estimators::good_turing_estimate;
use cdnsim_core::policies::static_allocate;
use cdnsim_core::rng::derive_seed;
use cdnsim_core::{
    ChangeModel, ContentId, LearnSpec, PolicyKind, SimConfig, Simulation, TraceKind, TraceRecord,
};
use rayon::prelude::*;

use crate::harness::Moments;

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl SuiteResult {
    fn new(name: &'static str, outcome: Result<String, String>) -> Self {
        match outcome {
            Ok(detail) => SuiteResult { name, pass: true, detail },
            Err(detail) => SuiteResult { name, pass: false, detail },
        }
    }
}

/// Suite sizes. `full` uses larger systems and more replications.
#[derive(Clone, Copy, Debug)]
pub struct Scale {
    pub n: usize,
    pub traces: usize,
    pub occupancy_replications: usize,
}

impl Scale {
    pub fn new(full: bool) -> Self {
        if full {
            Scale { n: 500, traces: 100, occupancy_replications: 4000 }
        } else {
            Scale { n: 100, traces: 100, occupancy_replications: 1000 }
        }
    }
}

pub fn run_all(full: bool) -> Vec<SuiteResult> {
    let scale = Scale::new(full);
    vec![
        SuiteResult::new("genie top-k idle invariant", genie_invariant(scale)),
        SuiteResult::new("myopic one change per arrival", myopic_single_change(scale)),
        SuiteResult::new("myopic coverage", myopic_coverage(scale)),
        SuiteResult::new("occupancy mean bound", occupancy_bound(scale)),
        SuiteResult::new("good-turing mass split", good_turing_identities()),
        SuiteResult::new("largest-remainder allocation", allocation_identities()),
        SuiteResult::new("bit-identical replay", replay(scale)),
    ]
}

fn traced(config: &SimConfig) -> Result<Vec<TraceRecord>, String> {
    let cfg = SimConfig { trace: true, ..config.clone() };
    let m = Simulation::new(&cfg)
        .and_then(|s| s.with_checks(true).finish())
        .map_err(|e| format!("seed {}: {e}", cfg.seed))?;
    Ok(m.trace.unwrap_or_default())
}

/// Server contents and busy flags rebuilt from trace records.
struct Replay {
    content: Vec<Option<ContentId>>,
    busy: Vec<bool>,
}

impl Replay {
    fn new(n: usize) -> Self {
        Replay { content: vec![None; n], busy: vec![false; n] }
    }

    fn apply(&mut self, r: &TraceRecord) -> Result<(), String> {
        match r.kind {
            TraceKind::Arrival => {
                if let Some(s) = r.server {
                    if self.busy[s.index()] || self.content[s.index()] != r.content {
                        return Err(format!("t={}: arrival routed to busy or wrong server {s}", r.time));
                    }
                    self.busy[s.index()] = true;
                }
            }
            TraceKind::Departure => {
                let s = r.server.ok_or("departure without server")?;
                self.busy[s.index()] = false;
            }
            TraceKind::Store => {
                let s = r.server.ok_or("store without server")?;
                if self.busy[s.index()] {
                    return Err(format!("t={}: store on busy server {s}", r.time));
                }
                self.content[s.index()] = r.content;
            }
            _ => {}
        }
        Ok(())
    }

    fn idle(&self) -> impl Iterator<Item = Option<ContentId>> + '_ {
        self.content.iter().zip(&self.busy).filter(|(_, &b)| !b).map(|(&c, _)| c)
    }
}

/// GENIE on static popularity, checked from the trace alone: between
/// events, the idle servers hold ranks 1..k exactly once each.
fn genie_invariant(scale: Scale) -> Result<String, String> {
    let checked: Result<Vec<usize>, String> = (0..scale.traces)
        .into_par_iter()
        .map(|i| {
            let cfg = SimConfig {
                n: scale.n,
                lambda_bar: [0.5, 0.8, 0.95][i % 3],
                beta: [1.2, 1.5, 2.0][i % 3],
                policy: PolicyKind::Genie,
                seed: derive_seed(0x6e, 0, i as u64),
                ..SimConfig::default()
            };
            let sim = Simulation::new(&cfg).map_err(|e| e.to_string())?;
            let rank: Vec<usize> =
                (0..cfg.m()).map(|j| sim.catalog().rank_of(ContentId::from_index(j))).collect();
            let trace = traced(&cfg)?;
            let mut replay = Replay::new(cfg.n);
            let mut checks = 0;
            for (j, r) in trace.iter().enumerate() {
                let event_start = matches!(r.kind, TraceKind::Arrival | TraceKind::Departure);
                if event_start && j > 0 {
                    genie_holds(&replay, &rank).map_err(|e| format!("seed {}: t={}: {e}", cfg.seed, r.time))?;
                    checks += 1;
                }
                replay.apply(r)?;
            }
            genie_holds(&replay, &rank)?;
            Ok(checks + 1)
        })
        .collect();
    let checked = checked?;
    Ok(format!("{} traces, {} states checked", checked.len(), checked.iter().sum::<usize>()))
}

fn genie_holds(replay: &Replay, rank: &[usize]) -> Result<(), String> {
    let mut ranks: Vec<usize> = replay
        .idle()
        .map(|c| c.map(|c| rank[c.index()]).ok_or_else(|| "empty idle server".to_string()))
        .collect::<Result<_, _>>()?;
    ranks.sort_unstable();
    let k = ranks.len();
    if ranks.iter().copied().eq(1..=k) {
        Ok(())
    } else {
        Err(format!("idle ranks are not 1..{k}"))
    }
}

fn myopic_configs(scale: Scale) -> impl ParallelIterator<Item = SimConfig> {
    (0..scale.traces).into_par_iter().map(move |i| SimConfig {
        n: scale.n,
        lambda_bar: [0.5, 0.8, 0.95][i % 3],
        beta: 1.5,
        change_model: [ChangeModel::None, ChangeModel::Continuous { nu: 1.0 }][i % 2],
        policy: PolicyKind::Myopic,
        seed: derive_seed(0x6d, 0, i as u64),
        ..SimConfig::default()
    })
}

fn myopic_single_change(scale: Scale) -> Result<String, String> {
    let arrivals: Result<Vec<u64>, String> = myopic_configs(scale)
        .map(|cfg| {
            let trace = traced(&cfg)?;
            let mut arrivals = 0;
            let mut stores = 0;
            for r in &trace {
                match r.kind {
                    TraceKind::Arrival => {
                        arrivals += 1;
                        stores = 0;
                    }
                    TraceKind::Store => {
                        stores += 1;
                        if stores > 1 {
                            return Err(format!("seed {}: two stores after arrival at t={}", cfg.seed, r.time));
                        }
                    }
                    // any storage change must follow an arrival directly
                    _ => stores = 1,
                }
            }
            Ok(arrivals)
        })
        .collect();
    let arrivals = arrivals?;
    Ok(format!("{} traces, {} arrivals", arrivals.len(), arrivals.iter().sum::<u64>()))
}

/// When idle servers outnumber the distinct contents requested so far at
/// every arrival, only first requests may be deferred.
fn myopic_coverage(scale: Scale) -> Result<String, String> {
    let results: Result<Vec<bool>, String> = (0..scale.traces)
        .into_par_iter()
        .map(|i| {
            let cfg = SimConfig {
                n: scale.n,
                lambda_bar: 0.3,
                beta: 1.5,
                horizon: 1.0,
                policy: PolicyKind::Myopic,
                seed: derive_seed(0x6d63, 0, i as u64),
                ..SimConfig::default()
            };
            let trace = traced(&cfg)?;
            let mut replay = Replay::new(cfg.n);
            let mut seen = vec![false; cfg.m()];
            let mut distinct = 0u64;
            let mut deferred = 0u64;
            let mut premise = true;
            for r in &trace {
                if r.kind == TraceKind::Arrival {
                    let idle = replay.busy.iter().filter(|&&b| !b).count() as u64;
                    premise &= idle > distinct;
                    let c = r.content.ok_or("arrival without content")?;
                    if !std::mem::replace(&mut seen[c.index()], true) {
                        distinct += 1;
                    }
                    if r.decision == Some(Decision::Deferred) {
                        deferred += 1;
                    }
                }
                replay.apply(r)?;
            }
            if premise && deferred > distinct {
                return Err(format!("seed {}: {deferred} deferred > {distinct} distinct", cfg.seed));
            }
            Ok(premise)
        })
        .collect();
    let results = results?;
    let applicable = results.iter().filter(|&&p| p).count();
    if applicable == 0 {
        return Err("premise never held; property untested".into());
    }
    Ok(format!("{applicable} of {} traces satisfied the premise", results.len()))
}

/// Mean busy servers at t stays below the occupancy of an infinite-server
/// queue started empty, `lambda_bar n (1 - e^-t)`, within three standard
/// errors.
fn occupancy_bound(scale: Scale) -> Result<String, String> {
    const TIMES: [f64; 4] = [0.5, 1.0, 2.0, 5.0];
    let mut report = Vec::new();
    for policy in [PolicyKind::Myopic, PolicyKind::Genie, PolicyKind::empirical(LearnSpec::Duration(0.1))] {
        let samples: Result<Vec<[f64; 4]>, String> = (0..scale.occupancy_replications)
            .into_par_iter()
            .map(|rep| {
                let cfg = SimConfig {
                    n: scale.n,
                    lambda_bar: 0.8,
                    beta: 1.5,
                    policy,
                    seed: derive_seed(0x0cc, 0, rep as u64),
                    ..SimConfig::default()
                };
                let mut sim = Simulation::new(&cfg).map_err(|e| e.to_string())?;
                let mut busy = [0.0; 4];
                for (b, &t) in busy.iter_mut().zip(&TIMES) {
                    sim.advance_to(t).map_err(|e| e.to_string())?;
                    *b = sim.state().busy_count() as f64;
                }
                Ok(busy)
            })
            .collect();
        let samples = samples?;
        for (j, &t) in TIMES.iter().enumerate() {
            let m = Moments::of(&samples.iter().map(|s| s[j]).collect::<Vec<_>>());
            let bound = 0.8 * scale.n as f64 * (1.0 - (-t).exp());
            if m.mean > bound + 3.0 * m.se {
                return Err(format!("{policy} t={t}: mean busy {:.3} > {bound:.3} + 3*{:.3}", m.mean, m.se));
            }
            if t == 5.0 {
                report.push(format!("{policy}: {:.2} <= {bound:.2}", m.mean));
            }
        }
    }
    Ok(report.join("; "))
}

/// Deterministic pseudo-random count vectors.
fn count_vectors() -> impl Iterator<Item = Vec<u64>> {
    (0..500u64).map(|i| {
        let len = 1 + (derive_seed(7, i, 0) % 60) as usize;
        let spread = 1 + derive_seed(7, i, 1) % 6;
        (0..len as u64)
            .map(|j| {
                let x = derive_seed(7, i, j + 2) % 10;
                if x < 4 { 0 } else { x % spread }
            })
            .collect()
    })
}

fn good_turing_identities() -> Result<String, String> {
    // 10 samples: A x5, B x3, C x1, D x1; 96 missing contents
    let mut counts = vec![0u64; 100];
    counts[..4].copy_from_slice(&[5, 3, 1, 1]);
    let e = good_turing_estimate(&counts);
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    if !(close(e.missing_mass, 0.2) && close(e.p_hat[0], 0.40) && close(e.p_hat[2], 0.08) && close(e.p_hat[50], 0.2 / 96.0)) {
        return Err(format!("worked example: M0={} p_A={} p_C={}", e.missing_mass, e.p_hat[0], e.p_hat[2]));
    }
    let mut checked = 1;
    for counts in count_vectors() {
        let e = good_turing_estimate(&counts);
        let total: f64 = e.p_hat.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(format!("{counts:?}: estimate sums to {total}"));
        }
        let unseen = counts.contains(&0);
        if e.samples > 0 && unseen {
            let missing: f64 = counts.iter().zip(&e.p_hat).filter(|(&c, _)| c == 0).map(|(_, p)| p).sum();
            if (missing - e.missing_mass).abs() > 1e-12 {
                return Err(format!("{counts:?}: unseen mass {missing} != {}", e.missing_mass));
            }
        }
        checked += 1;
    }
    Ok(format!("{checked} count vectors"))
}

fn allocation_identities() -> Result<String, String> {
    if static_allocate(&[0.5, 0.3, 0.2], 5).map_err(|e| e.to_string())? != vec![3, 1, 1] {
        return Err("worked example [0.5, 0.3, 0.2] over 5 servers".into());
    }
    let mut checked = 1;
    for (i, counts) in count_vectors().enumerate() {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            continue;
        }
        let p: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
        let n = 1 + (derive_seed(8, i as u64, 0) % 1000) as usize;
        let a = static_allocate(&p, n).map_err(|e| e.to_string())?;
        if a.iter().map(|&x| x as usize).sum::<usize>() != n {
            return Err(format!("allocation of {n} servers does not sum to {n}"));
        }
        if a.iter().zip(&p).any(|(&ai, &pi)| (ai as f64 - n as f64 * pi).abs() >= 1.0) {
            return Err(format!("quota deviation of 1 or more for n={n}"));
        }
        checked += 1;
    }
    Ok(format!("{checked} allocations"))
}

fn replay(scale: Scale) -> Result<String, String> {
    let mut runs = 0;
    for policy in [
        PolicyKind::Myopic,
        PolicyKind::Genie,
        PolicyKind::empirical(LearnSpec::Duration(0.1)),
        PolicyKind::good_turing(LearnSpec::ArrivalCount(100)),
    ] {
        for change_model in [ChangeModel::None, ChangeModel::Block { period: 1.0 }, ChangeModel::Continuous { nu: 1.0 }] {
            let cfg = SimConfig { n: scale.n, policy, change_model, trace: true, seed: 99, ..SimConfig::default() };
            let a = cdnsim_core::run(&cfg).map_err(|e| e.to_string())?;
            let b = cdnsim_core::run(&cfg).map_err(|e| e.to_string())?;
            let same_bits = a.trace.iter().flatten().zip(b.trace.iter().flatten()).all(|(x, y)| x.time.to_bits() == y.time.to_bits());
            if a != b || !same_bits {
                return Err(format!("{policy} under {change_model:?} differs between runs"));
            }
            runs += 1;
        }
    }
    Ok(format!("{runs} configurations"))
}
