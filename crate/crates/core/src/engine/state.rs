use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::{ContentId, ServerId};

/// Where a newly placed copy came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FetchClass {
    /// Another front-end server (busy or idle) already held the content.
    Internal,
    /// No front-end server held it; copied from the back end.
    External,
}

/// Last-request time ordered with `total_cmp`; never-requested is `-inf`.
#[derive(Clone, Copy, Debug)]
struct Recency(f64);

impl PartialEq for Recency {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Recency {}
impl PartialOrd for Recency {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Recency {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Server {
    /// `None` until something is first stored.
    pub content: Option<ContentId>,
    pub busy: bool,
}

/// Contents and busy/idle status of every server, plus the indices the
/// policies query: idle holders per content, how many servers hold each
/// content, and the recency order of contents on idle servers.
#[derive(Clone, Debug)]
pub struct ClusterState {
    servers: Vec<Server>,
    idle_count: usize,
    idle_holders: Vec<BTreeSet<ServerId>>,
    idle_empty: BTreeSet<ServerId>,
    presence: Vec<u32>,
    last_request: Vec<f64>,
    // contents with at least one idle holder
    idle_by_recency: BTreeSet<(Recency, ContentId)>,
    // contents with at least two idle holders
    duplicated_by_recency: BTreeSet<(Recency, ContentId)>,
}

impl ClusterState {
    /// `n` idle, empty servers and a catalog of `m` never-requested contents.
    pub fn new(n: usize, m: usize) -> Self {
        ClusterState {
            servers: vec![Server { content: None, busy: false }; n],
            idle_count: n,
            idle_holders: vec![BTreeSet::new(); m],
            idle_empty: (0..n as u32).map(ServerId).collect(),
            presence: vec![0; m],
            last_request: vec![f64::NEG_INFINITY; m],
            idle_by_recency: BTreeSet::new(),
            duplicated_by_recency: BTreeSet::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.servers.len()
    }

    pub fn m(&self) -> usize {
        self.presence.len()
    }

    pub fn idle_count(&self) -> usize {
        self.idle_count
    }

    pub fn busy_count(&self) -> usize {
        self.servers.len() - self.idle_count
    }

    pub fn server(&self, s: ServerId) -> Server {
        self.servers[s.index()]
    }

    pub fn servers(&self) -> &[Server] {
        &self.servers
    }

    /// Number of servers, busy or idle, holding `c`.
    pub fn presence(&self, c: ContentId) -> u32 {
        self.presence[c.index()]
    }

    pub fn last_request(&self, c: ContentId) -> f64 {
        self.last_request[c.index()]
    }

    /// Idle servers holding `c`, lowest id first.
    pub fn idle_holders(&self, c: ContentId) -> impl Iterator<Item = ServerId> + '_ {
        self.idle_holders[c.index()].iter().copied()
    }

    pub fn idle_multiplicity(&self, c: ContentId) -> usize {
        self.idle_holders[c.index()].len()
    }

    /// Idle servers that have never stored anything, lowest id first.
    pub fn idle_empty(&self) -> impl Iterator<Item = ServerId> + '_ {
        self.idle_empty.iter().copied()
    }

    /// Distinct contents currently on idle servers, least recently requested
    /// first (ties by content id).
    pub fn idle_contents_by_recency(&self) -> impl Iterator<Item = ContentId> + '_ {
        self.idle_by_recency.iter().map(|&(_, c)| c)
    }

    /// Contents on two or more idle servers, least recently requested first.
    pub fn duplicated_by_recency(&self) -> impl Iterator<Item = ContentId> + '_ {
        self.duplicated_by_recency.iter().map(|&(_, c)| c)
    }

    /// Routes a request for `c` to the lowest-id idle server holding it and
    /// marks that server busy.
    pub fn assign(&mut self, c: ContentId) -> Option<ServerId> {
        let s = *self.idle_holders[c.index()].first()?;
        self.remove_idle(s);
        self.servers[s.index()].busy = true;
        Some(s)
    }

    /// Marks a busy server idle.
    pub fn release(&mut self, s: ServerId) {
        assert!(self.servers[s.index()].busy, "release of idle server {s}");
        self.servers[s.index()].busy = false;
        self.add_idle(s);
    }

    /// Stores `c` on idle server `s`, evicting whatever it held. Returns
    /// `None` if `s` already holds `c`.
    ///
    /// Panics if `s` is busy: service is non-preemptive.
    pub fn install(&mut self, s: ServerId, c: ContentId) -> Option<FetchClass> {
        let server = self.servers[s.index()];
        assert!(!server.busy, "storage change on busy server {s}");
        if server.content == Some(c) {
            return None;
        }
        let class = if self.presence[c.index()] == 0 {
            FetchClass::External
        } else {
            FetchClass::Internal
        };
        self.remove_idle(s);
        if let Some(old) = server.content {
            self.presence[old.index()] -= 1;
        }
        self.servers[s.index()].content = Some(c);
        self.presence[c.index()] += 1;
        self.add_idle(s);
        Some(class)
    }

    /// Records a request for `c` at time `now`.
    pub fn touch(&mut self, c: ContentId, now: f64) {
        let old = Recency(self.last_request[c.index()]);
        self.last_request[c.index()] = now;
        let k = self.idle_holders[c.index()].len();
        if k >= 1 {
            self.idle_by_recency.remove(&(old, c));
            self.idle_by_recency.insert((Recency(now), c));
        }
        if k >= 2 {
            self.duplicated_by_recency.remove(&(old, c));
            self.duplicated_by_recency.insert((Recency(now), c));
        }
    }

    fn add_idle(&mut self, s: ServerId) {
        self.idle_count += 1;
        match self.servers[s.index()].content {
            None => {
                self.idle_empty.insert(s);
            }
            Some(c) => {
                let holders = &mut self.idle_holders[c.index()];
                holders.insert(s);
                let key = (Recency(self.last_request[c.index()]), c);
                match holders.len() {
                    1 => {
                        self.idle_by_recency.insert(key);
                    }
                    2 => {
                        self.duplicated_by_recency.insert(key);
                    }
                    _ => {}
                }
            }
        }
    }

    fn remove_idle(&mut self, s: ServerId) {
        self.idle_count -= 1;
        match self.servers[s.index()].content {
            None => {
                self.idle_empty.remove(&s);
            }
            Some(c) => {
                let holders = &mut self.idle_holders[c.index()];
                holders.remove(&s);
                let key = (Recency(self.last_request[c.index()]), c);
                match holders.len() {
                    0 => {
                        self.idle_by_recency.remove(&key);
                    }
                    1 => {
                        self.duplicated_by_recency.remove(&key);
                    }
                    _ => {}
                }
            }
        }
    }

    /// Recounts every index from the server table.
    pub fn check_invariants(&self) -> Result<(), &'static str> {
        let n = self.servers.len();
        let idle = self.servers.iter().filter(|s| !s.busy).count();
        if idle != self.idle_count || self.idle_count + self.busy_count() != n {
            return Err("idle count out of sync");
        }
        let mut presence = vec![0u32; self.m()];
        let mut idle_mult = vec![0usize; self.m()];
        let mut empty = 0;
        for (i, s) in self.servers.iter().enumerate() {
            match s.content {
                Some(c) => {
                    presence[c.index()] += 1;
                    if !s.busy {
                        idle_mult[c.index()] += 1;
                        if !self.idle_holders[c.index()].contains(&ServerId(i as u32)) {
                            return Err("idle holder missing from index");
                        }
                    }
                }
                None if !s.busy => {
                    empty += 1;
                    if !self.idle_empty.contains(&ServerId(i as u32)) {
                        return Err("empty idle server missing from index");
                    }
                }
                None => {}
            }
        }
        if presence != self.presence {
            return Err("presence count out of sync");
        }
        if empty != self.idle_empty.len() {
            return Err("empty index out of sync");
        }
        for (i, &k) in idle_mult.iter().enumerate() {
            let c = ContentId::from_index(i);
            let key = (Recency(self.last_request[i]), c);
            if self.idle_holders[i].len() != k
                || self.idle_by_recency.contains(&key) != (k >= 1)
                || self.duplicated_by_recency.contains(&key) != (k >= 2)
            {
                return Err("idle recency index out of sync");
            }
        }
        if self.idle_by_recency.len() != idle_mult.iter().filter(|&&k| k >= 1).count()
            || self.duplicated_by_recency.len() != idle_mult.iter().filter(|&&k| k >= 2).count()
        {
            return Err("stale recency entries");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(i: u32) -> ContentId {
        ContentId(i)
    }
    fn s(i: u32) -> ServerId {
        ServerId(i)
    }

    #[test]
    fn routes_to_lowest_idle_holder() {
        let mut st = ClusterState::new(6, 3);
        st.install(s(2), c(1));
        st.install(s(5), c(1));
        assert_eq!(st.assign(c(1)), Some(s(2)));
        assert_eq!(st.assign(c(2)), None);
        assert_eq!(st.idle_count(), 5);
        st.check_invariants().unwrap();
    }

    #[test]
    fn all_busy_defers() {
        let mut st = ClusterState::new(2, 2);
        st.install(s(0), c(1));
        st.install(s(1), c(1));
        assert!(st.assign(c(1)).is_some());
        assert!(st.assign(c(1)).is_some());
        assert_eq!(st.idle_count(), 0);
        assert_eq!(st.assign(c(1)), None);
    }

    #[test]
    fn fetch_classification() {
        let mut st = ClusterState::new(3, 4);
        assert_eq!(st.install(s(0), c(1)), Some(FetchClass::External));
        st.assign(c(1));
        // the only copy is on a busy server
        assert_eq!(st.install(s(1), c(1)), Some(FetchClass::Internal));
        assert_eq!(st.install(s(1), c(1)), None);
        assert_eq!(st.presence(c(1)), 2);
        assert_eq!(st.install(s(1), c(2)), Some(FetchClass::External));
        assert_eq!(st.presence(c(1)), 1);
        st.check_invariants().unwrap();
    }

    #[test]
    #[should_panic(expected = "busy server")]
    fn no_storage_change_while_busy() {
        let mut st = ClusterState::new(1, 2);
        st.install(s(0), c(1));
        st.assign(c(1));
        st.install(s(0), c(2));
    }

    #[test]
    fn recency_indices() {
        let mut st = ClusterState::new(4, 5);
        st.install(s(0), c(1));
        st.install(s(1), c(2));
        st.install(s(2), c(2));
        st.install(s(3), c(3));
        st.touch(c(1), 1.0);
        st.touch(c(2), 3.0);
        st.touch(c(3), 2.0);
        let order: Vec<_> = st.idle_contents_by_recency().collect();
        assert_eq!(order, vec![c(1), c(3), c(2)]);
        let dups: Vec<_> = st.duplicated_by_recency().collect();
        assert_eq!(dups, vec![c(2)]);
        st.assign(c(2));
        assert_eq!(st.duplicated_by_recency().count(), 0);
        st.check_invariants().unwrap();
    }

    proptest! {
        #[test]
        fn indices_survive_random_operations(ops in proptest::collection::vec((0u8..4, 0u32..8, 1u32..6), 1..200)) {
            let mut st = ClusterState::new(8, 5);
            let mut t = 0.0;
            for (op, srv, content) in ops {
                t += 1.0;
                match op {
                    0 => { st.assign(c(content)); }
                    1 => if st.server(s(srv)).busy { st.release(s(srv)); },
                    2 => if !st.server(s(srv)).busy { st.install(s(srv), c(content)); },
                    _ => st.touch(c(content), t),
                }
                prop_assert_eq!(st.check_invariants(), Ok(()));
            }
        }
    }
}
