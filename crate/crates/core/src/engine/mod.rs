//! The event loop.
//!
//! Requests arrive as one Poisson stream of rate `n * lambda_bar`. Each
//! arrival is routed to the lowest-id idle server holding the requested
//! content, or deferred if there is none; a deferred request leaves the
//! system at once. A served request holds its server for an Exp(1) time.
//! After routing the policy may change the content of idle servers, and
//! only then is the request's time recorded as the content's last request.

mod event;
mod state;

use alloc::boxed::Box;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::config::{ChangeModel, SimConfig};
use crate::demand::{exponential, next_interarrival, Catalog};
use crate::error::{Error, Result};
use crate::estimators::Degenerate;
use crate::policies::{build_policy, Policy, PopularityChange};
use crate::rng::{SimRng, Streams};
use crate::{ContentId, ServerId};

pub use event::{Event, EventKind, EventQueue};
pub use state::{ClusterState, FetchClass, Server};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceKind {
    Arrival,
    Departure,
    /// A policy stored a content on an idle server.
    Store,
    PopularityTick,
    BlockBoundary,
    PhaseBoundary,
}

impl TraceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceKind::Arrival => "arrival",
            TraceKind::Departure => "departure",
            TraceKind::Store => "store",
            TraceKind::PopularityTick => "popularity_tick",
            TraceKind::BlockBoundary => "block_boundary",
            TraceKind::PhaseBoundary => "phase_boundary",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Served,
    Deferred,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Served => "served",
            Decision::Deferred => "deferred",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRecord {
    pub time: f64,
    pub kind: TraceKind,
    pub content: Option<ContentId>,
    pub server: Option<ServerId>,
    pub decision: Option<Decision>,
    pub fetch: Option<FetchClass>,
}

/// Counters of one run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunMetrics {
    pub arrivals: u64,
    pub served: u64,
    pub deferred: u64,
    /// Deferrals while a static policy was still learning.
    pub deferred_phase1: u64,
    pub external_fetches: u64,
    pub internal_fetches: u64,
    pub distinct_contents_requested: u64,
    pub max_busy: u64,
    pub popularity_changes: u64,
    pub phase_boundary_time: Option<f64>,
    pub degenerate_estimate: Option<Degenerate>,
    /// FNV-1a over arrival times and requested contents; equal across
    /// policies for the same seed.
    pub workload_checksum: u64,
    pub trace: Option<Vec<TraceRecord>>,
}

impl RunMetrics {
    /// Fraction of arrivals that were served; 1 when nothing arrived.
    pub fn served_fraction(&self) -> f64 {
        if self.arrivals == 0 {
            1.0
        } else {
            self.served as f64 / self.arrivals as f64
        }
    }

    fn record(&mut self, rec: TraceRecord) {
        if let Some(t) = self.trace.as_mut() {
            t.push(rec);
        }
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(mut h: u64, word: u64) -> u64 {
    for b in word.to_le_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// What a policy sees and may change during one event.
pub struct Ctx<'a> {
    pub state: &'a mut ClusterState,
    pub catalog: &'a Catalog,
    pub now: f64,
    /// Policy-private randomness (initial loadings).
    pub rng: &'a mut SimRng,
    pub n: usize,
    pub lambda_bar: f64,
    metrics: &'a mut RunMetrics,
}

impl Ctx<'_> {
    /// Stores `c` on idle server `s` and accounts the fetch.
    pub fn install(&mut self, s: ServerId, c: ContentId) -> Option<FetchClass> {
        let class = self.state.install(s, c)?;
        match class {
            FetchClass::External => self.metrics.external_fetches += 1,
            FetchClass::Internal => self.metrics.internal_fetches += 1,
        }
        self.metrics.record(TraceRecord {
            time: self.now,
            kind: TraceKind::Store,
            content: Some(c),
            server: Some(s),
            decision: None,
            fetch: Some(class),
        });
        Some(class)
    }

    pub fn flag_degenerate(&mut self, d: Degenerate) {
        self.metrics.degenerate_estimate = Some(d);
    }
}

// Borrows the fields a policy may touch, leaving `policy` free.
macro_rules! ctx {
    ($sim:expr) => {
        Ctx {
            state: &mut $sim.state,
            catalog: &$sim.catalog,
            now: $sim.now,
            rng: &mut $sim.streams.init,
            n: $sim.config.n,
            lambda_bar: $sim.config.lambda_bar,
            metrics: &mut $sim.metrics,
        }
    };
}

/// One simulation run that can be advanced piecewise.
pub struct Simulation {
    config: SimConfig,
    catalog: Catalog,
    state: ClusterState,
    streams: Streams,
    queue: EventQueue,
    now: f64,
    metrics: RunMetrics,
    requested: Vec<bool>,
    policy: Box<dyn Policy>,
    checks: bool,
}

impl Simulation {
    pub fn new(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let policy = build_policy(config);
        Self::with_policy(config, policy)
    }

    /// Runs `config` with a caller-supplied policy; `config.policy` is
    /// ignored.
    pub fn with_policy(config: &SimConfig, policy: Box<dyn Policy>) -> Result<Self> {
        config.validate()?;
        for w in config.warnings() {
            log::debug!("{w}");
        }
        let (n, m) = (config.n, config.m());
        let mut sim = Simulation {
            catalog: Catalog::new(m, config.beta)?,
            state: ClusterState::new(n, m),
            streams: Streams::new(config.seed),
            queue: EventQueue::default(),
            now: 0.0,
            metrics: RunMetrics {
                workload_checksum: FNV_OFFSET,
                trace: config.trace.then(Vec::new),
                ..RunMetrics::default()
            },
            requested: vec![false; m],
            policy,
            checks: false,
            config: config.clone(),
        };

        let mut ctx = ctx!(sim);
        sim.policy.init(&mut ctx);

        let first = next_interarrival(n, config.lambda_bar, &mut sim.streams.interarrival)?;
        sim.queue.push(first, EventKind::Arrival);
        match config.change_model {
            ChangeModel::None => {}
            ChangeModel::Block { period } => sim.queue.push(period, EventKind::BlockBoundary),
            ChangeModel::Continuous { nu } => {
                if nu > 0.0 && m >= 2 {
                    let t = exponential(m as f64 * nu, &mut sim.streams.change);
                    sim.queue.push(t, EventKind::PopularityTick);
                }
            }
        }
        if let Some(d) = sim.policy.learning_duration() {
            if d <= config.horizon {
                sim.queue.push(d, EventKind::PhaseBoundary);
            } else {
                log::info!("learning phase {d} exceeds horizon {}", config.horizon);
            }
        }
        sim.check()?;
        Ok(sim)
    }

    /// Recount all state indices and policy invariants after every event.
    pub fn with_checks(mut self, on: bool) -> Self {
        self.checks = on;
        self
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn state(&self) -> &ClusterState {
        &self.state
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn metrics(&self) -> &RunMetrics {
        &self.metrics
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    fn check(&self) -> Result<()> {
        if !self.checks {
            return Ok(());
        }
        let fail = |what: &str| Error::InvariantViolated {
            time: self.now,
            what: what.to_string(),
        };
        self.state.check_invariants().map_err(fail)?;
        self.policy.check(&self.state, &self.catalog).map_err(|e| fail(&e))?;
        let m = &self.metrics;
        if m.arrivals != m.served + m.deferred {
            return Err(fail("arrivals != served + deferred"));
        }
        Ok(())
    }

    /// Processes the next event if it falls within the horizon. Returns
    /// `false` once nothing is left to do.
    pub fn step(&mut self) -> Result<bool> {
        self.step_until(self.config.horizon)
    }

    fn step_until(&mut self, limit: f64) -> Result<bool> {
        match self.queue.peek_time() {
            Some(t) if t <= limit && t <= self.config.horizon => {}
            _ => return Ok(false),
        }
        let ev = self.queue.pop().expect("peeked");
        if ev.time < self.now {
            return Err(Error::NonMonotoneTime {
                now: self.now,
                popped: ev.time,
            });
        }
        self.now = ev.time;
        match ev.kind {
            EventKind::Arrival => self.on_arrival()?,
            EventKind::Departure(s) => self.on_departure(s),
            EventKind::PopularityTick => self.on_tick(),
            EventKind::BlockBoundary => self.on_block_boundary(),
            EventKind::PhaseBoundary => self.on_phase_boundary(),
        }
        self.check()?;
        Ok(true)
    }

    /// Processes every event up to and including time `t`.
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        while self.step_until(t)? {}
        Ok(())
    }

    /// Runs to the horizon and returns the metrics.
    pub fn finish(mut self) -> Result<RunMetrics> {
        while self.step()? {}
        Ok(self.metrics)
    }

    fn on_arrival(&mut self) -> Result<()> {
        let now = self.now;
        let c = self.catalog.sample(&mut self.streams.content);
        let m = &mut self.metrics;
        m.arrivals += 1;
        m.workload_checksum = fnv1a(fnv1a(m.workload_checksum, now.to_bits()), c.0 as u64);
        if !core::mem::replace(&mut self.requested[c.index()], true) {
            m.distinct_contents_requested += 1;
        }

        let routed = self.state.assign(c);
        match routed {
            Some(s) => {
                m.served += 1;
                m.max_busy = m.max_busy.max(self.state.busy_count() as u64);
                let service = exponential(1.0, &mut self.streams.service);
                self.queue.push(now + service, EventKind::Departure(s));
            }
            None => {
                m.deferred += 1;
                if self.policy.is_learning() {
                    m.deferred_phase1 += 1;
                }
            }
        }
        m.record(TraceRecord {
            time: now,
            kind: TraceKind::Arrival,
            content: Some(c),
            server: routed,
            decision: Some(if routed.is_some() { Decision::Served } else { Decision::Deferred }),
            fetch: None,
        });

        let mut ctx = ctx!(self);
        self.policy.on_arrival(&mut ctx, c, routed);
        self.state.touch(c, now);

        let gap = next_interarrival(self.config.n, self.config.lambda_bar, &mut self.streams.interarrival)?;
        self.queue.push(now + gap, EventKind::Arrival);
        Ok(())
    }

    fn on_departure(&mut self, s: ServerId) {
        self.state.release(s);
        self.metrics.record(TraceRecord {
            time: self.now,
            kind: TraceKind::Departure,
            content: self.state.server(s).content,
            server: Some(s),
            decision: None,
            fetch: None,
        });
        let mut ctx = ctx!(self);
        self.policy.on_departure(&mut ctx, s);
    }

    fn on_tick(&mut self) {
        let m = self.catalog.m();
        if let Some((a, b)) = self.catalog.apply_continuous_swap(&mut self.streams.change) {
            self.metrics.popularity_changes += 1;
            self.metrics.record(TraceRecord {
                time: self.now,
                kind: TraceKind::PopularityTick,
                content: Some(a),
                server: None,
                decision: None,
                fetch: None,
            });
            let mut ctx = ctx!(self);
            self.policy.on_popularity_change(&mut ctx, PopularityChange::Swap(a, b));
        }
        if let ChangeModel::Continuous { nu } = self.config.change_model {
            let gap = exponential(m as f64 * nu, &mut self.streams.change);
            self.queue.push(self.now + gap, EventKind::PopularityTick);
        }
    }

    fn on_block_boundary(&mut self) {
        self.catalog.apply_block_resample(&mut self.streams.change);
        self.metrics.popularity_changes += 1;
        self.metrics.record(TraceRecord {
            time: self.now,
            kind: TraceKind::BlockBoundary,
            content: None,
            server: None,
            decision: None,
            fetch: None,
        });
        let mut ctx = ctx!(self);
        self.policy.on_popularity_change(&mut ctx, PopularityChange::Resample);
        if let ChangeModel::Block { period } = self.config.change_model {
            self.queue.push(self.now + period, EventKind::BlockBoundary);
        }
    }

    fn on_phase_boundary(&mut self) {
        self.metrics.phase_boundary_time = Some(self.now);
        self.metrics.record(TraceRecord {
            time: self.now,
            kind: TraceKind::PhaseBoundary,
            content: None,
            server: None,
            decision: None,
            fetch: None,
        });
        let mut ctx = ctx!(self);
        self.policy.on_phase_boundary(&mut ctx);
    }
}

/// Simulates `[0, horizon]` under `config`.
pub fn run(config: &SimConfig) -> Result<RunMetrics> {
    Simulation::new(config)?.finish()
}
