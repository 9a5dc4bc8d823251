use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::demand::Catalog;
use crate::engine::{ClusterState, Ctx};
use crate::{ContentId, ServerId};

use super::{Policy, PopularityChange};

/// Popularity-aware policy: with `k` idle servers, the `k` most popular
/// contents sit on exactly one idle server each.
#[derive(Clone, Copy, Debug, Default)]
pub struct Genie;

impl Genie {
    /// Relabels idle servers whose content left the top `k` with the top-`k`
    /// contents missing from idle servers. Servers in id order, missing
    /// contents in rank order.
    fn reconcile(ctx: &mut Ctx<'_>) {
        let k = ctx.state.idle_count();
        let missing: Vec<ContentId> = (1..=k)
            .map(|r| ctx.catalog.content_at(r))
            .filter(|&c| ctx.state.idle_multiplicity(c) == 0)
            .collect();
        let stale: Vec<ServerId> = ctx
            .state
            .servers()
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.busy)
            .filter(|(_, s)| s.content.is_none_or(|c| ctx.catalog.rank_of(c) > k))
            .map(|(i, _)| ServerId(i as u32))
            .collect();
        debug_assert_eq!(stale.len(), missing.len());
        for (s, c) in stale.into_iter().zip(missing) {
            ctx.install(s, c);
        }
    }
}

impl Policy for Genie {
    fn init(&mut self, ctx: &mut Ctx<'_>) {
        for (i, rank) in (1..=ctx.n).enumerate() {
            let c = ctx.catalog.content_at(rank);
            ctx.install(ServerId(i as u32), c);
        }
    }

    fn on_arrival(&mut self, ctx: &mut Ctx<'_>, content: ContentId, routed: Option<ServerId>) {
        if routed.is_none() {
            return;
        }
        let k = ctx.state.idle_count() + 1;
        let rank = ctx.catalog.rank_of(content);
        debug_assert!(rank <= k);
        if rank < k {
            let kth = ctx.catalog.content_at(k);
            let s = ctx.state.idle_holders(kth).next().expect("rank-k content is idle");
            ctx.install(s, content);
        }
    }

    fn on_departure(&mut self, ctx: &mut Ctx<'_>, server: ServerId) {
        // the freed server joins the k = idle - 1 servers already in place
        let next = ctx.state.idle_count();
        if next <= ctx.catalog.m() {
            let c = ctx.catalog.content_at(next);
            ctx.install(server, c);
        }
    }

    fn on_popularity_change(&mut self, ctx: &mut Ctx<'_>, change: PopularityChange) {
        let k = ctx.state.idle_count();
        match change {
            PopularityChange::Swap(a, b) => {
                let (ra, rb) = (ctx.catalog.rank_of(a), ctx.catalog.rank_of(b));
                // the one that dropped out of the top k hands its idle server over
                let (gone, new) = if ra <= k && rb > k {
                    (b, a)
                } else if rb <= k && ra > k {
                    (a, b)
                } else {
                    return;
                };
                let s = ctx.state.idle_holders(gone).next().expect("top-k content is idle");
                ctx.install(s, new);
            }
            PopularityChange::Resample => Self::reconcile(ctx),
        }
    }

    fn check(&self, state: &ClusterState, catalog: &Catalog) -> Result<(), String> {
        let k = state.idle_count();
        let mut seen = BTreeSet::new();
        for (i, s) in state.servers().iter().enumerate().filter(|(_, s)| !s.busy) {
            let c = s.content.ok_or_else(|| format!("idle server {i} is empty"))?;
            let r = catalog.rank_of(c);
            if r > k {
                return Err(format!("idle server {i} holds rank {r} > {k}"));
            }
            if !seen.insert(r) {
                return Err(format!("rank {r} on two idle servers"));
            }
        }
        Ok(())
    }
}
