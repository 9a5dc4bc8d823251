//! Discrete-event core for simulating content placement on a farm of
//! unit-capacity servers under unknown, time-varying Zipf demand.
//!
//! The crate is `no_std` and only needs `alloc`. It contains:
//!
//! - [`demand`]: Zipf popularity, content sampling, Poisson arrivals and the
//!   two popularity-change models.
//! - [`engine`]: the event loop, cluster state, routing and fetch accounting.
//! - [`policies`]: MYOPIC, GENIE and the learn-then-freeze static policies.
//! - [`estimators`]: empirical and Good-Turing popularity estimates.
//!
//! IO, replication, statistics and the command line live in the `cdnsim`
//! companion crate.
//!
//! ```
//! use cdnsim_core::{run, PolicyKind, SimConfig};
//!
//! let config = SimConfig {
//!     n: 50,
//!     policy: PolicyKind::Myopic,
//!     ..SimConfig::default()
//! };
//! let metrics = run(&config).unwrap();
//! assert_eq!(metrics.arrivals, metrics.served + metrics.deferred);
//! ```

#![no_std]
#![forbid(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod config;
pub mod demand;
pub mod engine;
pub mod estimators;
pub mod policies;
pub mod rng;

mod error;

use core::fmt;

pub use config::{ChangeModel, EstimatorKind, LearnSpec, PolicyKind, SimConfig};
pub use demand::Catalog;
pub use engine::{run, ClusterState, FetchClass, RunMetrics, Simulation, TraceKind, TraceRecord};
pub use error::{ConfigError, Error, Result};
pub use estimators::EstimateVector;

/// Identifier of a content type, `1..=m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContentId(pub u32);

impl ContentId {
    /// Zero-based position of this content in per-content tables.
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    #[inline]
    pub fn from_index(index: usize) -> Self {
        ContentId(index as u32 + 1)
    }
}

impl fmt::Display for ContentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Identifier of a front-end server, `0..n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ServerId(pub u32);

impl ServerId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ServerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
