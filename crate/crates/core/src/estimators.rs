//! Popularity estimates from learning-phase request counts.
//!
//! Both estimators take dense per-content counts `counts[c.index()] = N_c`
//! and return a probability for every content in the catalog.

use alloc::vec;
use alloc::vec::Vec;

/// Why an estimate fell back to a rule the plain formula does not cover.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Degenerate {
    /// No requests were observed; the estimate is uniform.
    NoSamples,
    /// Good-Turing put mass on unseen contents but every content was seen;
    /// the seen mass was renormalized to 1.
    NoMissingContents,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimateVector {
    pub p_hat: Vec<f64>,
    pub samples: u64,
    /// Estimated total probability of the contents never requested.
    pub missing_mass: f64,
    pub degenerate: Option<Degenerate>,
}

impl EstimateVector {
    fn uniform(m: usize) -> Self {
        EstimateVector {
            p_hat: vec![1.0 / m as f64; m],
            samples: 0,
            missing_mass: 0.0,
            degenerate: Some(Degenerate::NoSamples),
        }
    }
}

/// Relative frequencies; unseen contents get zero.
pub fn empirical_estimate(counts: &[u64]) -> EstimateVector {
    let samples: u64 = counts.iter().sum();
    if samples == 0 {
        return EstimateVector::uniform(counts.len());
    }
    let total = samples as f64;
    EstimateVector {
        p_hat: counts.iter().map(|&k| k as f64 / total).collect(),
        samples,
        missing_mass: 0.0,
        degenerate: None,
    }
}

/// Good-Turing missing-mass estimate `M0 = |S1| / samples`, where `S1` is the
/// set of contents seen exactly once. The missing mass is spread evenly over
/// unseen contents and seen contents share `1 - M0` in proportion to their
/// counts.
pub fn good_turing_estimate(counts: &[u64]) -> EstimateVector {
    let samples: u64 = counts.iter().sum();
    if samples == 0 {
        return EstimateVector::uniform(counts.len());
    }
    let total = samples as f64;
    let singletons = counts.iter().filter(|&&k| k == 1).count();
    let missing = counts.iter().filter(|&&k| k == 0).count();
    let missing_mass = singletons as f64 / total;

    if missing == 0 && missing_mass > 0.0 {
        log::debug!("good-turing: every content was seen; renormalizing seen mass");
        return EstimateVector {
            p_hat: counts.iter().map(|&k| k as f64 / total).collect(),
            samples,
            missing_mass,
            degenerate: Some(Degenerate::NoMissingContents),
        };
    }

    let unseen_share = if missing > 0 { missing_mass / missing as f64 } else { 0.0 };
    let seen_scale = (1.0 - missing_mass) / total;
    EstimateVector {
        p_hat: counts
            .iter()
            .map(|&k| if k == 0 { unseen_share } else { seen_scale * k as f64 })
            .collect(),
        samples,
        missing_mass,
        degenerate: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{neumaier_sum, Catalog};
    use crate::rng::{substream, Stream};
    use proptest::prelude::*;

    fn counts(m: usize, pairs: &[(usize, u64)]) -> Vec<u64> {
        let mut c = vec![0; m];
        for &(i, k) in pairs {
            c[i] = k;
        }
        c
    }

    #[test]
    fn empirical_relative_frequency() {
        let e = empirical_estimate(&counts(10, &[(0, 3), (1, 1)]));
        assert_eq!(e.p_hat[0], 0.75);
        assert_eq!(e.p_hat[1], 0.25);
        assert!(e.p_hat[2..].iter().all(|&p| p == 0.0));
        assert_eq!(e.missing_mass, 0.0);

        let e = empirical_estimate(&[5, 0]);
        assert_eq!(e.p_hat, vec![1.0, 0.0]);
    }

    #[test]
    fn empirical_without_samples_is_uniform() {
        let e = empirical_estimate(&[0, 0, 0, 0]);
        assert_eq!(e.p_hat, vec![0.25; 4]);
        assert_eq!(e.degenerate, Some(Degenerate::NoSamples));
    }

    #[test]
    fn good_turing_worked_example() {
        // A:5 B:3 C:1 D:1 out of 100 contents
        let e = good_turing_estimate(&counts(100, &[(0, 5), (1, 3), (2, 1), (3, 1)]));
        assert_eq!(e.samples, 10);
        assert!((e.missing_mass - 0.2).abs() < 1e-15);
        assert!((e.p_hat[0] - 0.40).abs() < 1e-15);
        assert!((e.p_hat[1] - 0.24).abs() < 1e-15);
        assert!((e.p_hat[2] - 0.08).abs() < 1e-15);
        for &p in &e.p_hat[4..] {
            assert!((p - 0.2 / 96.0).abs() < 1e-15);
        }
        assert!((neumaier_sum(e.p_hat.iter().copied()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn good_turing_without_singletons_is_empirical() {
        let c = counts(20, &[(0, 4), (5, 2), (9, 3)]);
        let gt = good_turing_estimate(&c);
        assert_eq!(gt.missing_mass, 0.0);
        assert_eq!(gt.p_hat, empirical_estimate(&c).p_hat);
    }

    #[test]
    fn good_turing_all_singletons() {
        let e = good_turing_estimate(&counts(10, &[(0, 1), (1, 1), (2, 1)]));
        assert_eq!(e.missing_mass, 1.0);
        assert!(e.p_hat[..3].iter().all(|&p| p == 0.0));
        assert!(e.p_hat[3..].iter().all(|&p| (p - 1.0 / 7.0).abs() < 1e-15));
        assert_eq!(e.degenerate, None);
    }

    #[test]
    fn good_turing_all_seen_renormalizes() {
        let e = good_turing_estimate(&[1, 3]);
        assert_eq!(e.degenerate, Some(Degenerate::NoMissingContents));
        assert_eq!(e.p_hat, vec![0.25, 0.75]);
    }

    #[test]
    fn good_turing_without_samples_is_uniform() {
        let e = good_turing_estimate(&[0; 8]);
        assert_eq!(e.p_hat, vec![0.125; 8]);
        assert_eq!(e.degenerate, Some(Degenerate::NoSamples));
    }

    #[test]
    fn good_turing_tracks_true_missing_mass() {
        let cat = Catalog::new(100, 1.5).unwrap();
        let mut rng = substream(2024, Stream::Content);
        let trials = 100;
        let mut err = 0.0;
        for _ in 0..trials {
            let mut c = vec![0u64; 100];
            for _ in 0..10_000 {
                c[cat.sample(&mut rng).index()] += 1;
            }
            let truth: f64 = c
                .iter()
                .enumerate()
                .filter(|(_, &k)| k == 0)
                .map(|(i, _)| cat.base_pmf()[i])
                .sum();
            err += (good_turing_estimate(&c).missing_mass - truth).abs();
        }
        assert!(err / (trials as f64) < 0.02);
    }

    proptest! {
        #[test]
        fn mass_split(c in proptest::collection::vec(0u64..5, 1..200)) {
            let e = good_turing_estimate(&c);
            prop_assume!(e.samples > 0 && c.contains(&0));
            let seen = neumaier_sum(c.iter().zip(&e.p_hat).filter(|(&k, _)| k > 0).map(|(_, &p)| p));
            let unseen = neumaier_sum(c.iter().zip(&e.p_hat).filter(|(&k, _)| k == 0).map(|(_, &p)| p));
            prop_assert!((seen - (1.0 - e.missing_mass)).abs() < 1e-12);
            prop_assert!((unseen - e.missing_mass).abs() < 1e-12);
            prop_assert!(e.p_hat.iter().all(|&p| p >= 0.0));
        }

        #[test]
        fn permutation_equivariance(c in proptest::collection::vec(0u64..6, 2..60), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut perm: Vec<usize> = (0..c.len()).collect();
            perm.shuffle(&mut substream(seed, Stream::Init));
            let permuted: Vec<u64> = perm.iter().map(|&i| c[i]).collect();
            for f in [good_turing_estimate, empirical_estimate] {
                let a = f(&c);
                let b = f(&permuted);
                for (j, &i) in perm.iter().enumerate() {
                    prop_assert_eq!(a.p_hat[i], b.p_hat[j]);
                }
            }
        }
    }
}
