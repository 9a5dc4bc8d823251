use alloc::vec;
use alloc::vec::Vec;

use crate::config::EstimatorKind;
use crate::demand::neumaier_sum;
use crate::engine::Ctx;
use crate::error::{Error, Result};
use crate::estimators::{empirical_estimate, good_turing_estimate};
use crate::{ContentId, ServerId};

use super::{load_random_subset, Policy};

/// Integer server counts proportional to `p_hat` by largest remainder:
/// floors of the quotas `n * p_hat[c]`, then one extra server each for the
/// largest fractional parts (ties to the lower content id).
pub fn static_allocate(p_hat: &[f64], n: usize) -> Result<Vec<u32>> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1"));
    }
    if p_hat.iter().any(|&p| !(p >= 0.0) || !p.is_finite())
        || (neumaier_sum(p_hat.iter().copied()) - 1.0).abs() > 1e-9
    {
        return Err(Error::InvalidParameter("estimate must be a probability vector"));
    }
    // Remainders are compared at 1e-9 resolution so that quotas which tie
    // exactly still tie after rounding noise and fall back to the lower id.
    let quotas: Vec<f64> = p_hat
        .iter()
        .map(|&p| {
            let q = p * n as f64;
            let r = libm::round(q);
            if (q - r).abs() < 1e-9 { r } else { q }
        })
        .collect();
    let mut alloc: Vec<u32> = quotas.iter().map(|&q| libm::floor(q) as u32).collect();
    let assigned: usize = alloc.iter().map(|&a| a as usize).sum();
    let shortfall = n.saturating_sub(assigned);

    let remainder = |i: usize| libm::round((quotas[i] - libm::floor(quotas[i])) * 1e9) as i64;
    let mut order: Vec<usize> = (0..p_hat.len()).collect();
    order.sort_by_key(|&i| (core::cmp::Reverse(remainder(i)), i));
    for &i in order.iter().take(shortfall) {
        alloc[i] += 1;
    }
    Ok(alloc)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Learning,
    Static,
}

/// Learn-then-freeze policy.
///
/// Starts with `n` distinct contents chosen uniformly at random, one per
/// server, and only counts requests until the learning time has elapsed.
/// It then estimates popularity, allocates servers in proportion, restocks
/// idle servers at once and busy ones as they free up, and never changes
/// storage again.
#[derive(Clone, Debug)]
pub struct StaticLearning {
    estimator: EstimatorKind,
    learn_for: f64,
    counts: Vec<u64>,
    phase: Phase,
    targets: Vec<Option<ContentId>>,
}

impl StaticLearning {
    pub fn new(estimator: EstimatorKind, learn_for: f64, m: usize) -> Self {
        StaticLearning {
            estimator,
            learn_for,
            counts: vec![0; m],
            phase: Phase::Learning,
            targets: Vec::new(),
        }
    }

    /// Requests counted during learning, indexed by content.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Content each server holds once the static phase has begun.
    pub fn targets(&self) -> &[Option<ContentId>] {
        &self.targets
    }
}

/// Maps an allocation onto servers, letting servers that already hold an
/// allocated content keep it.
fn assign_targets(current: &[Option<ContentId>], mut alloc: Vec<u32>) -> Vec<ContentId> {
    let mut targets: Vec<Option<ContentId>> = current
        .iter()
        .map(|&c| match c {
            Some(c) if alloc[c.index()] > 0 => {
                alloc[c.index()] -= 1;
                Some(c)
            }
            _ => None,
        })
        .collect();
    let mut rest = alloc
        .iter()
        .enumerate()
        .flat_map(|(i, &k)| core::iter::repeat_n(ContentId::from_index(i), k as usize));
    for t in targets.iter_mut().filter(|t| t.is_none()) {
        *t = rest.next();
    }
    targets.into_iter().map(|t| t.expect("allocation covers every server")).collect()
}

impl Policy for StaticLearning {
    fn init(&mut self, ctx: &mut Ctx<'_>) {
        load_random_subset(ctx);
    }

    fn on_arrival(&mut self, _ctx: &mut Ctx<'_>, content: ContentId, _routed: Option<ServerId>) {
        if self.phase == Phase::Learning {
            self.counts[content.index()] += 1;
        }
    }

    fn learning_duration(&self) -> Option<f64> {
        Some(self.learn_for)
    }

    fn is_learning(&self) -> bool {
        self.phase == Phase::Learning
    }

    fn on_phase_boundary(&mut self, ctx: &mut Ctx<'_>) {
        let estimate = match self.estimator {
            EstimatorKind::Empirical => empirical_estimate(&self.counts),
            EstimatorKind::GoodTuring => good_turing_estimate(&self.counts),
        };
        if let Some(d) = estimate.degenerate {
            log::info!("degenerate estimate at phase boundary: {d:?}");
            ctx.flag_degenerate(d);
        }
        let alloc = static_allocate(&estimate.p_hat, ctx.n).expect("estimates are normalized");
        let current: Vec<Option<ContentId>> = ctx.state.servers().iter().map(|s| s.content).collect();
        let targets = assign_targets(&current, alloc);
        for (i, &c) in targets.iter().enumerate() {
            let s = ServerId(i as u32);
            if !ctx.state.server(s).busy {
                ctx.install(s, c);
            }
        }
        self.targets = targets.into_iter().map(Some).collect();
        self.phase = Phase::Static;
    }

    fn on_departure(&mut self, ctx: &mut Ctx<'_>, server: ServerId) {
        if self.phase == Phase::Static {
            if let Some(c) = self.targets[server.index()] {
                ctx.install(server, c);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn largest_remainder_worked_example() {
        assert_eq!(static_allocate(&[0.5, 0.3, 0.2], 5).unwrap(), vec![3, 1, 1]);
    }

    #[test]
    fn exact_quotas() {
        assert_eq!(static_allocate(&[0.25; 4], 4).unwrap(), vec![1, 1, 1, 1]);
    }

    #[test]
    fn point_mass() {
        let mut p = vec![0.0; 10];
        p[6] = 1.0;
        let a = static_allocate(&p, 2).unwrap();
        assert_eq!(a[6], 2);
        assert_eq!(a.iter().sum::<u32>(), 2);
    }

    #[test]
    fn equal_unseen_mass_goes_to_lowest_ids() {
        let a = static_allocate(&[0.1; 10], 4).unwrap();
        assert_eq!(a, vec![1, 1, 1, 1, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn rejects_unnormalized() {
        assert!(static_allocate(&[0.5, 0.4], 3).is_err());
        assert!(static_allocate(&[1.5, -0.5], 3).is_err());
        assert!(static_allocate(&[1.0], 0).is_err());
    }

    #[test]
    fn targets_keep_matching_servers() {
        let current = [Some(ContentId(3)), Some(ContentId(1)), None, Some(ContentId(3))];
        // content 1 x1, content 2 x2, content 3 x1
        let t = assign_targets(&current, vec![1, 2, 1]);
        assert_eq!(t, vec![ContentId(3), ContentId(1), ContentId(2), ContentId(2)]);
    }

    proptest! {
        #[test]
        fn allocation_identities(raw in proptest::collection::vec(0.0f64..10.0, 1..80), n in 1usize..500) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 0.0);
            let p: Vec<f64> = raw.iter().map(|r| r / total).collect();
            let a = static_allocate(&p, n).unwrap();
            prop_assert_eq!(a.iter().map(|&x| x as usize).sum::<usize>(), n);
            for (&ai, &pi) in a.iter().zip(&p) {
                prop_assert!((ai as f64 - n as f64 * pi).abs() < 1.0);
            }
        }
    }
}
