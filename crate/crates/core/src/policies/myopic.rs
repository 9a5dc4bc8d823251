use crate::engine::{ClusterState, Ctx};
use crate::{ContentId, ServerId};

use super::Policy;

/// Keeps recently requested contents available on idle servers.
///
/// After each arrival for `c`, if no idle server still holds `c`, one idle
/// server is switched to `c`: a holder of a content duplicated across idle
/// servers if there is one, otherwise the holder of the least recently
/// requested idle content. Starts from an empty system.
#[derive(Clone, Copy, Debug, Default)]
pub struct Myopic;

/// The idle server MYOPIC overwrites next, or `None` if nothing is idle.
///
/// Empty servers count as holding a placeholder that was never requested,
/// so two or more of them form the oldest duplicate and a single one is the
/// least recent idle content. Among duplicated contents the least recently
/// requested wins (ties by content id); within a content, the lowest server
/// id.
pub fn myopic_pick_victim(state: &ClusterState) -> Option<ServerId> {
    let mut empty = state.idle_empty();
    let first_empty = empty.next();
    let several_empty = empty.next().is_some();

    if several_empty {
        return first_empty;
    }
    if let Some(c) = state.duplicated_by_recency().next() {
        return state.idle_holders(c).next();
    }
    if first_empty.is_some() {
        return first_empty;
    }
    let c = state.idle_contents_by_recency().next()?;
    state.idle_holders(c).next()
}

impl Policy for Myopic {
    fn init(&mut self, _ctx: &mut Ctx<'_>) {}

    fn on_arrival(&mut self, ctx: &mut Ctx<'_>, content: ContentId, _routed: Option<ServerId>) {
        if ctx.state.idle_multiplicity(content) > 0 {
            return;
        }
        if let Some(victim) = myopic_pick_victim(ctx.state) {
            ctx.install(victim, content);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(i: u32) -> ContentId {
        ContentId(i)
    }
    fn s(i: u32) -> ServerId {
        ServerId(i)
    }

    /// Servers 0.. hold `contents`, all idle; `times` are last-request times.
    fn state_with(contents: &[u32], times: &[(u32, f64)], m: usize) -> ClusterState {
        let mut st = ClusterState::new(contents.len(), m);
        for (i, &k) in contents.iter().enumerate() {
            st.install(s(i as u32), c(k));
        }
        for &(k, t) in times {
            st.touch(c(k), t);
        }
        st
    }

    #[test]
    fn never_requested_is_least_recent() {
        let st = state_with(&[1, 2], &[(2, 4.0)], 3);
        assert_eq!(myopic_pick_victim(&st), Some(s(0)));
    }

    #[test]
    fn duplicates_before_recency() {
        // A=1 at t=1 (unique), B=2 at t=2 on two servers
        let st = state_with(&[1, 2, 2], &[(1, 1.0), (2, 2.0)], 3);
        assert_eq!(myopic_pick_victim(&st), Some(s(1)));
    }

    #[test]
    fn never_requested_ties_by_content_id() {
        let st = state_with(&[5, 3], &[], 6);
        assert_eq!(myopic_pick_victim(&st), Some(s(1)));
    }

    #[test]
    fn nothing_idle_no_victim() {
        let mut st = state_with(&[1], &[], 2);
        st.assign(c(1));
        assert_eq!(myopic_pick_victim(&st), None);
    }

    #[test]
    fn empty_servers_fill_first() {
        let mut st = ClusterState::new(3, 4);
        st.install(s(1), c(1));
        assert_eq!(myopic_pick_victim(&st), Some(s(0)));
        st.install(s(0), c(2));
        st.install(s(2), c(2));
        // one empty slot left would have been s(2); now it is full
        assert_eq!(myopic_pick_victim(&st), Some(s(0)));
    }

    #[test]
    fn single_empty_server_yields_to_duplicate() {
        let mut st = ClusterState::new(3, 4);
        st.install(s(0), c(1));
        st.install(s(1), c(1));
        assert_eq!(myopic_pick_victim(&st), Some(s(0)));
    }
}
