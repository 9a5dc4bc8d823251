//! Request workload: Zipf popularity over a catalog of content types, the
//! aggregate Poisson arrival stream, and the popularity-change models.
//!
//! Per-content Poisson processes with rates `n * load * p_i` are realized
//! as one aggregate stream of rate `n * load` whose arrivals are labelled by
//! drawing a content from the current popularity law.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::ContentId;

/// Zipf probabilities `p_i = i^-beta / sum_j j^-beta` for ranks `1..=m`.
pub fn zipf_pmf(m: usize, beta: f64) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1"));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidParameter("beta must be positive"));
    }
    let weights: Vec<f64> = (1..=m).map(|i| libm::pow(i as f64, -beta)).collect();
    // smallest terms first
    let z = neumaier_sum(weights.iter().rev().copied());
    Ok(weights.into_iter().map(|w| w / z).collect())
}

/// Compensated summation.
pub(crate) fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if libm::fabs(sum) >= libm::fabs(v) {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Exponential inter-arrival time of the aggregate request stream, mean
/// `1 / (n * lambda_bar)`.
pub fn next_interarrival<R: Rng + ?Sized>(n: usize, lambda_bar: f64, rng: &mut R) -> Result<f64> {
    let rate = n as f64 * lambda_bar;
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::InvalidParameter("arrival rate must be positive"));
    }
    Ok(exponential(rate, rng))
}

/// Inverse-CDF exponential draw; consumes exactly one `f64`.
#[inline]
pub(crate) fn exponential<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    -libm::log1p(-u) / rate
}

/// The content universe: a fixed Zipf law over ranks and a mutable
/// assignment of contents to ranks.
#[derive(Clone, Debug)]
pub struct Catalog {
    beta: f64,
    base_pmf: Vec<f64>,
    cdf: Vec<f64>,
    // both zero-based: rank_of_content[c.index()] = rank - 1
    rank_of_content: Vec<u32>,
    content_of_rank: Vec<u32>,
}

impl Catalog {
    /// A catalog where content `i` starts at rank `i`.
    pub fn new(m: usize, beta: f64) -> Result<Self> {
        let base_pmf = zipf_pmf(m, beta)?;
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = base_pmf
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        *cdf.last_mut().expect("m >= 1") = 1.0;
        let identity: Vec<u32> = (0..m as u32).collect();
        Ok(Catalog {
            beta,
            base_pmf,
            cdf,
            rank_of_content: identity.clone(),
            content_of_rank: identity,
        })
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.base_pmf.len()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Probability per rank, most popular first.
    pub fn base_pmf(&self) -> &[f64] {
        &self.base_pmf
    }

    /// One-based popularity rank of `c`.
    #[inline]
    pub fn rank_of(&self, c: ContentId) -> usize {
        self.rank_of_content[c.index()] as usize + 1
    }

    /// Content at one-based `rank`.
    #[inline]
    pub fn content_at(&self, rank: usize) -> ContentId {
        ContentId::from_index(self.content_of_rank[rank - 1] as usize)
    }

    /// Current request probability of `c`.
    #[inline]
    pub fn probability_of(&self, c: ContentId) -> f64 {
        self.base_pmf[self.rank_of_content[c.index()] as usize]
    }

    /// Draws the content of one request. Consumes exactly one `f64`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ContentId {
        let u: f64 = rng.random();
        let rank = self.cdf.partition_point(|&c| c <= u).min(self.m() - 1);
        ContentId::from_index(self.content_of_rank[rank] as usize)
    }

    /// Exchanges the ranks of two contents.
    pub fn swap_ranks(&mut self, a: ContentId, b: ContentId) {
        let (ra, rb) = (self.rank_of_content[a.index()], self.rank_of_content[b.index()]);
        self.rank_of_content.swap(a.index(), b.index());
        self.content_of_rank.swap(ra as usize, rb as usize);
    }

    /// One tick of the continuous change model: a uniformly chosen content
    /// swaps ranks with a uniformly chosen different content. Returns `None`
    /// when `m < 2`.
    pub fn apply_continuous_swap<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
    ) -> Option<(ContentId, ContentId)> {
        let m = self.m();
        if m < 2 {
            return None;
        }
        let i = rng.random_range(0..m);
        let mut j = rng.random_range(0..m - 1);
        if j >= i {
            j += 1;
        }
        let (i, j) = (ContentId::from_index(i), ContentId::from_index(j));
        self.swap_ranks(i, j);
        Some((i, j))
    }

    /// Block boundary: a fresh uniformly random assignment of contents to
    /// ranks. The law over ranks is unchanged.
    pub fn apply_block_resample<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.content_of_rank.shuffle(rng);
        for (rank, &c) in self.content_of_rank.iter().enumerate() {
            self.rank_of_content[c as usize] = rank as u32;
        }
    }

    /// Checks that the two rank tables are inverse bijections.
    pub fn is_consistent(&self) -> bool {
        let m = self.m();
        if self.rank_of_content.len() != m || self.content_of_rank.len() != m {
            return false;
        }
        let mut seen = alloc::vec![false; m];
        for (c, &r) in self.rank_of_content.iter().enumerate() {
            let r = r as usize;
            if r >= m || seen[r] || self.content_of_rank[r] as usize != c {
                return false;
            }
            seen[r] = true;
        }
        true
    }
}
