use cdnsim_core::demand::zipf_pmf;
use cdnsim_core::engine::Decision;
use cdnsim_core::estimators::{empirical_estimate, good_turing_estimate};
use cdnsim_core::policies::static_allocate;
use cdnsim_core::{run, ChangeModel, LearnSpec, PolicyKind, SimConfig, Simulation, TraceKind};
use proptest::prelude::*;

fn policy_strategy() -> impl Strategy<Value = PolicyKind> {
    prop_oneof![
        Just(PolicyKind::Myopic),
        Just(PolicyKind::Genie),
        (1u64..60).prop_map(|k| PolicyKind::empirical(LearnSpec::ArrivalCount(k))),
        (0.05f64..1.0).prop_map(|t| PolicyKind::good_turing(LearnSpec::Duration(t))),
    ]
}

fn change_strategy() -> impl Strategy<Value = ChangeModel> {
    prop_oneof![
        Just(ChangeModel::None),
        (0.2f64..2.0).prop_map(|period| ChangeModel::Block { period }),
        (0.0f64..2.0).prop_map(|nu| ChangeModel::Continuous { nu }),
    ]
}

prop_compose! {
    fn config_strategy()(
        n in 1usize..40,
        alpha in 1.1f64..3.0,
        lambda_bar in 0.1f64..1.5,
        beta in 0.3f64..3.0,
        horizon in 0.5f64..4.0,
        change_model in change_strategy(),
        policy in policy_strategy(),
        seed in any::<u64>(),
    ) -> SimConfig {
        SimConfig { n, alpha, lambda_bar, beta, horizon, change_model, policy, seed, trace: true }
    }
}

/// Server contents and busy flags rebuilt from the trace alone.
struct Replay {
    content: Vec<Option<u32>>,
    busy: Vec<bool>,
}

impl Replay {
    fn check(config: &SimConfig) -> Result<(), TestCaseError> {
        let metrics = run(config).unwrap();
        let trace = metrics.trace.as_ref().unwrap();
        let mut r = Replay { content: vec![None; config.n], busy: vec![false; config.n] };
        let (mut served, mut deferred, mut stores) = (0u64, 0u64, 0u64);
        let mut last = 0.0f64;
        for rec in trace {
            prop_assert!(rec.time >= last && rec.time <= config.horizon);
            last = rec.time;
            match rec.kind {
                TraceKind::Store => {
                    let s = rec.server.unwrap().index();
                    prop_assert!(!r.busy[s], "store on busy server {s} at {}", rec.time);
                    r.content[s] = rec.content.map(|c| c.0);
                    stores += 1;
                }
                TraceKind::Arrival => match rec.decision.unwrap() {
                    Decision::Served => {
                        let s = rec.server.unwrap().index();
                        prop_assert!(!r.busy[s]);
                        prop_assert_eq!(r.content[s], rec.content.map(|c| c.0));
                        r.busy[s] = true;
                        served += 1;
                    }
                    Decision::Deferred => {
                        let c = rec.content.unwrap().0;
                        prop_assert!(
                            !(0..config.n).any(|s| !r.busy[s] && r.content[s] == Some(c)),
                            "deferred content {c} had an idle copy"
                        );
                        deferred += 1;
                    }
                },
                TraceKind::Departure => {
                    let s = rec.server.unwrap().index();
                    prop_assert!(r.busy[s]);
                    r.busy[s] = false;
                }
                _ => {}
            }
        }
        prop_assert_eq!((served, deferred), (metrics.served, metrics.deferred));
        prop_assert_eq!(metrics.arrivals, metrics.served + metrics.deferred);
        prop_assert_eq!(stores, metrics.external_fetches + metrics.internal_fetches);
        prop_assert!(metrics.max_busy as usize <= config.n);
        Ok(())
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn traces_replay_consistently(config in config_strategy()) {
        Replay::check(&config)?;
    }

    #[test]
    fn checked_stepping_matches_run(config in config_strategy()) {
        let mut sim = Simulation::new(&config).unwrap().with_checks(true);
        while sim.step().unwrap() {}
        let stepped = sim.finish().unwrap();
        prop_assert_eq!(stepped, run(&config).unwrap());
    }

    #[test]
    fn policies_see_the_same_workload(config in config_strategy()) {
        let sums: Vec<(u64, u64)> = [
            PolicyKind::Myopic,
            PolicyKind::Genie,
            PolicyKind::empirical(LearnSpec::Duration(0.3)),
            PolicyKind::good_turing(LearnSpec::ArrivalCount(10)),
        ]
        .into_iter()
        .map(|policy| {
            let m = run(&SimConfig { policy, trace: false, ..config.clone() }).unwrap();
            (m.workload_checksum, m.arrivals)
        })
        .collect();
        prop_assert!(sums.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn zipf_matches_direct_normalization(m in 1usize..3000, beta in 0.1f64..6.0) {
        let pmf = zipf_pmf(m, beta).unwrap();
        let z: f64 = (1..=m).map(|i| (i as f64).powf(-beta)).sum();
        for (i, p) in pmf.iter().enumerate() {
            let want = ((i + 1) as f64).powf(-beta) / z;
            prop_assert!((p - want).abs() <= 1e-12 * want.max(1e-300) + 1e-15);
        }
        prop_assert!(pmf.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn good_turing_matches_count_of_counts(counts in prop::collection::vec(0u64..6, 2..60)) {
        let est = good_turing_estimate(&counts);
        let total: u64 = counts.iter().sum();
        prop_assume!(total > 0 && counts.contains(&0));
        let ones = counts.iter().filter(|&&k| k == 1).count() as f64;
        let zeros = counts.iter().filter(|&&k| k == 0).count() as f64;
        let m0 = ones / total as f64;
        prop_assert!((est.missing_mass - m0).abs() < 1e-12);
        for (&k, &p) in counts.iter().zip(&est.p_hat) {
            let want = if k == 0 { m0 / zeros } else { (1.0 - m0) * k as f64 / total as f64 };
            prop_assert!((p - want).abs() < 1e-12);
        }
        let unseen: f64 = counts.iter().zip(&est.p_hat).filter(|(&k, _)| k == 0).map(|(_, p)| p).sum();
        prop_assert!((unseen - m0).abs() < 1e-12);
    }

    #[test]
    fn allocation_is_largest_remainder(weights in prop::collection::vec(0u32..50, 1..40), n in 1usize..200) {
        let total: u32 = weights.iter().sum();
        prop_assume!(total > 0);
        let p: Vec<f64> = weights.iter().map(|&w| w as f64 / total as f64).collect();
        let a = static_allocate(&p, n).unwrap();
        prop_assert_eq!(a.iter().map(|&x| x as usize).sum::<usize>(), n);
        // oracle: integer arithmetic on n*w/total
        let q: Vec<u64> = weights.iter().map(|&w| n as u64 * w as u64).collect();
        let floors: Vec<u64> = q.iter().map(|&x| x / total as u64).collect();
        let mut order: Vec<usize> = (0..q.len()).collect();
        order.sort_by_key(|&i| (std::cmp::Reverse(q[i] % total as u64), i));
        let short = n - floors.iter().sum::<u64>() as usize;
        let mut want = floors.clone();
        for &i in &order[..short] {
            want[i] += 1;
        }
        prop_assert_eq!(a.iter().map(|&x| x as u64).collect::<Vec<_>>(), want);
    }
}

#[test]
fn good_turing_worked_example() {
    let mut counts = vec![0u64; 100];
    counts[..4].copy_from_slice(&[5, 3, 1, 1]);
    let est = good_turing_estimate(&counts);
    assert!((est.missing_mass - 0.2).abs() < 1e-12);
    assert!((est.p_hat[0] - 0.40).abs() < 1e-12);
    assert!((est.p_hat[1] - 0.24).abs() < 1e-12);
    assert!((est.p_hat[2] - 0.08).abs() < 1e-12);
    assert!((est.p_hat[50] - 0.2 / 96.0).abs() < 1e-15);
    let emp = empirical_estimate(&counts);
    assert_eq!((emp.p_hat[0], emp.p_hat[50]), (0.5, 0.0));
}

#[test]
fn arrival_count_is_expected_arrivals() {
    assert_eq!(LearnSpec::ArrivalCount(100).duration(500, 0.8), 0.25);
    assert_eq!(LearnSpec::Duration(0.7).duration(500, 0.8), 0.7);
}

#[test]
fn genie_fills_every_server_at_start() {
    let config = SimConfig { n: 30, policy: PolicyKind::Genie, horizon: 1e-9, ..SimConfig::default() };
    let m = run(&config).unwrap();
    assert_eq!((m.arrivals, m.external_fetches, m.internal_fetches), (0, 30, 0));
}

#[test]
fn no_load_means_no_activity() {
    let config = SimConfig { n: 4, lambda_bar: 1e-12, policy: PolicyKind::Myopic, ..SimConfig::default() };
    let m = run(&config).unwrap();
    assert_eq!((m.arrivals, m.deferred, m.max_busy), (0, 0, 0));
}

#[test]
fn invalid_configs_rejected() {
    for bad in [
        SimConfig { n: 0, ..SimConfig::default() },
        SimConfig { alpha: 1.0, ..SimConfig::default() },
        SimConfig { beta: f64::NAN, ..SimConfig::default() },
        SimConfig { horizon: 0.0, ..SimConfig::default() },
        SimConfig { change_model: ChangeModel::Block { period: 0.0 }, ..SimConfig::default() },
        SimConfig { change_model: ChangeModel::Continuous { nu: -1.0 }, ..SimConfig::default() },
    ] {
        assert!(run(&bad).is_err(), "{bad:?}");
    }
}
