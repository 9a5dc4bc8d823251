use cdnsim::harness::{
    dominance_check, dominance_from, fit_exponent, replicate, ExperimentSpec, HarnessError, Moments, Outcome, Sweep,
};
use cdnsim_core::{LearnSpec, PolicyKind, SimConfig};
use proptest::prelude::*;

/// Welford's streaming mean and variance.
fn welford(xs: &[f64]) -> (f64, f64) {
    let (mut mean, mut m2) = (0.0, 0.0);
    for (i, &x) in xs.iter().enumerate() {
        let d = x - mean;
        mean += d / (i + 1) as f64;
        m2 += d * (x - mean);
    }
    let var = if xs.len() > 1 { m2 / (xs.len() - 1) as f64 } else { 0.0 };
    (mean, var.sqrt())
}

proptest! {
    #[test]
    fn moments_match_streaming_oracle(xs in prop::collection::vec(0.0f64..1.0, 1..400)) {
        let m = Moments::of(&xs);
        let (mean, std) = welford(&xs);
        prop_assert!((m.mean - mean).abs() < 1e-12);
        prop_assert!((m.std - std).abs() < 1e-12);
        prop_assert!((m.se - std / (xs.len() as f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn planted_slopes_recovered(c in 0.01f64..100.0, b in -2.0f64..2.0) {
        let pts: Vec<(f64, f64)> = [250.0, 500.0, 1000.0, 2000.0].iter().map(|&x: &f64| (x, c * x.powf(b))).collect();
        let f = fit_exponent(&pts).unwrap();
        prop_assert!((f.slope - b).abs() < 1e-9);
        prop_assert!(f.lo <= f.slope && f.slope <= f.hi);
    }
}

#[test]
fn linear_law_has_unit_slope() {
    let pts: Vec<(f64, f64)> = (1..=5).map(|i| (i as f64 * 100.0, 3.0 * i as f64 * 100.0)).collect();
    assert!((fit_exponent(&pts).unwrap().slope - 1.0).abs() < 1e-12);
}

#[test]
fn two_thirds_law() {
    let pts: Vec<(f64, f64)> = [250.0f64, 500.0, 1000.0, 2000.0].iter().map(|&x| (x, 7.0 * x.powf(2.0 / 3.0))).collect();
    assert!((fit_exponent(&pts).unwrap().slope - 2.0 / 3.0).abs() < 1e-9);
}

#[test]
fn zero_points_dropped_and_too_few_rejected() {
    let f = fit_exponent(&[(1.0, 0.0), (2.0, 2.0), (4.0, 4.0), (8.0, 8.0)]).unwrap();
    assert_eq!((f.points_used, f.dropped), (3, 1));
    assert!(matches!(
        fit_exponent(&[(1.0, 0.0), (2.0, 2.0), (4.0, 4.0)]),
        Err(HarnessError::InsufficientData { usable: 2 })
    ));
}

#[test]
fn noisy_interval_covers_slope() {
    let pts = [(250.0, 10.0), (500.0, 17.0), (1000.0, 25.0), (2000.0, 41.0)];
    let f = fit_exponent(&pts).unwrap();
    assert!(f.lo < f.slope && f.slope < f.hi);
}

fn small(policies: Vec<PolicyKind>, reps: usize, sweep: Sweep) -> ExperimentSpec {
    ExperimentSpec::new(SimConfig { n: 40, horizon: 2.0, ..SimConfig::default() }, policies, reps, sweep)
}

#[test]
fn single_replication_flags_zero_std() {
    let exp = replicate(&small(vec![PolicyKind::Myopic], 1, Sweep::None), Some(1)).unwrap();
    let row = &exp.rows()[0];
    assert_eq!((row.replications, row.std_served_fraction, row.single_sample), (1, 0.0, true));
}

#[test]
fn rows_ordered_by_policy_then_value() {
    let spec = small(vec![PolicyKind::Myopic, PolicyKind::Genie], 3, Sweep::Beta(vec![2.0, 1.2]));
    let rows = replicate(&spec, None).unwrap().rows();
    let keys: Vec<(String, f64)> = rows.iter().map(|r| (r.policy.clone(), r.sweep_value)).collect();
    assert_eq!(
        keys,
        vec![("myopic".into(), 1.2), ("myopic".into(), 2.0), ("genie".into(), 1.2), ("genie".into(), 2.0)]
    );
    for r in &rows {
        assert!((0.0..=1.0).contains(&r.mean_served_fraction) && r.std_served_fraction >= 0.0);
    }
}

#[test]
fn policies_share_workloads() {
    let policies = vec![
        PolicyKind::Genie,
        PolicyKind::Myopic,
        PolicyKind::empirical(LearnSpec::ArrivalCount(20)),
        PolicyKind::good_turing(LearnSpec::ArrivalCount(20)),
    ];
    let exp = replicate(&small(policies.clone(), 5, Sweep::N(vec![20, 40])), None).unwrap();
    for point in 0..2 {
        let sums: Vec<Vec<u64>> = policies
            .iter()
            .map(|p| exp.cell(p, point).unwrap().outcomes.iter().map(|o| o.workload_checksum).collect())
            .collect();
        assert!(sums.windows(2).all(|w| w[0] == w[1]));
        let arrivals: Vec<u64> = exp.cell(&policies[0], point).unwrap().outcomes.iter().map(|o| o.arrivals).collect();
        assert!(arrivals.windows(2).any(|w| w[0] != w[1]), "replications must differ");
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let spec = small(vec![PolicyKind::Myopic, PolicyKind::Genie], 6, Sweep::None);
    assert_eq!(replicate(&spec, Some(1)).unwrap(), replicate(&spec, Some(3)).unwrap());
}

#[test]
fn invalid_specs_rejected() {
    assert!(replicate(&small(vec![], 1, Sweep::None), None).is_err());
    assert!(replicate(&small(vec![PolicyKind::Myopic], 0, Sweep::None), None).is_err());
    assert!(replicate(&small(vec![PolicyKind::Myopic], 1, Sweep::Beta(vec![])), None).is_err());
    assert!(replicate(&small(vec![PolicyKind::Myopic], 1, Sweep::Beta(vec![-1.0])), None).is_err());
}

#[test]
fn policy_against_itself_passes_non_strict() {
    let base = SimConfig { n: 50, ..SimConfig::default() };
    let d = dominance_check(&base, &PolicyKind::Myopic, &PolicyKind::Myopic, 20, false).unwrap();
    assert_eq!(d.diff_mean, 0.0);
    assert!(d.pass);
    assert!(!dominance_check(&base, &PolicyKind::Myopic, &PolicyKind::Myopic, 20, true).unwrap().pass);
}

#[test]
fn genie_defers_less_than_myopic() {
    let base = SimConfig { n: 200, lambda_bar: 0.8, beta: 1.5, ..SimConfig::default() };
    let d = dominance_check(&base, &PolicyKind::Genie, &PolicyKind::Myopic, 100, true).unwrap();
    assert!(d.pass, "{} vs {}", d.mean_p, d.mean_q);
    assert_eq!(d.ecdf_p.last().unwrap().1, 1.0);
}

#[test]
fn myopic_beats_good_turing() {
    let base = SimConfig { n: 200, lambda_bar: 0.8, beta: 1.5, ..SimConfig::default() };
    let gt = PolicyKind::good_turing(LearnSpec::Duration(0.7));
    let d = dominance_check(&base, &PolicyKind::Myopic, &gt, 100, true).unwrap();
    assert!(d.pass, "{} vs {}", d.mean_p, d.mean_q);
}

#[test]
fn dominance_uses_paired_differences() {
    let o = |seed, deferred| Outcome {
        seed,
        served_fraction: 0.0,
        arrivals: 100,
        deferred,
        external_fetches: 0,
        internal_fetches: 0,
        degenerate: false,
        workload_checksum: 0,
    };
    // large spread across runs, constant paired gap
    let p = [o(1, 10), o(2, 50), o(3, 90)];
    let q = [o(1, 11), o(2, 51), o(3, 91)];
    let d = dominance_from(&p, &q, true);
    assert_eq!((d.diff_mean, d.diff_se), (1.0, 0.0));
    assert!(d.pass);
}
