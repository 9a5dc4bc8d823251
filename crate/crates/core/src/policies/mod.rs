//! Storage policies: which content each idle server holds.

mod genie;
mod myopic;
mod static_learning;

use alloc::boxed::Box;
use alloc::string::String;

use crate::config::{PolicyKind, SimConfig};
use crate::demand::Catalog;
use crate::engine::{ClusterState, Ctx};
use crate::{ContentId, ServerId};

use rand::seq::index;

pub use genie::Genie;
pub use myopic::{myopic_pick_victim, Myopic};
pub use static_learning::{static_allocate, StaticLearning};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PopularityChange {
    /// Two contents exchanged ranks.
    Swap(ContentId, ContentId),
    /// The whole ranking was redrawn.
    Resample,
}

/// Loads `n` distinct contents drawn uniformly from the catalog, one per
/// server, using the initialization stream.
pub(crate) fn load_random_subset(ctx: &mut Ctx<'_>) {
    let m = ctx.catalog.m();
    let chosen = index::sample(ctx.rng, m, ctx.n.min(m));
    for (i, c) in chosen.iter().enumerate() {
        ctx.install(ServerId(i as u32), ContentId::from_index(c));
    }
}

/// Hooks called by the engine. Policies may only change idle servers,
/// through [`Ctx::install`].
pub trait Policy: Send {
    /// Called once at time 0 with every server idle and empty.
    fn init(&mut self, ctx: &mut Ctx<'_>);

    /// Called after the arrival of a request for `content` was routed to
    /// `routed` (or deferred), before its request time is recorded.
    fn on_arrival(&mut self, ctx: &mut Ctx<'_>, content: ContentId, routed: Option<ServerId>);

    /// Called after `server` finished service and became idle.
    fn on_departure(&mut self, _ctx: &mut Ctx<'_>, _server: ServerId) {}

    fn on_popularity_change(&mut self, _ctx: &mut Ctx<'_>, _change: PopularityChange) {}

    /// Time at which the learning phase ends, for learn-then-freeze
    /// policies.
    fn learning_duration(&self) -> Option<f64> {
        None
    }

    fn on_phase_boundary(&mut self, _ctx: &mut Ctx<'_>) {}

    fn is_learning(&self) -> bool {
        false
    }

    /// Policy-specific invariant, checked after every event when the
    /// simulation runs with checks enabled.
    fn check(&self, _state: &ClusterState, _catalog: &Catalog) -> Result<(), String> {
        Ok(())
    }
}

pub fn build_policy(config: &SimConfig) -> Box<dyn Policy> {
    match config.policy {
        PolicyKind::Myopic => Box::new(Myopic),
        PolicyKind::Genie => Box::new(Genie),
        PolicyKind::StaticLearning { estimator, learn } => Box::new(StaticLearning::new(
            estimator,
            learn.duration(config.n, config.lambda_bar),
            config.m(),
        )),
    }
}
