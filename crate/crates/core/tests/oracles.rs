//! Cross-checks between independent routes to the same quantity: closed
//! forms, brute-force enumeration, exact stationary analysis, Monte Carlo and
//! relative value iteration.

use aoi_energy::eval::{
    enumerate_optimal, evaluate_exact, evaluate_exact_truncated, simulate, stationary,
};
use aoi_energy::solver::{extract_thresholds, solve, solve_thresholds};
use aoi_energy::structure::{check_submodularity, submodularity_margin};
use aoi_energy::{
    Action, Error, Method, PolicySpec, PolicyTable, SimConfig, SolverConfig, State, SystemParams,
    Threshold,
};

/// Average cost of zero-wait: the AoI is geometric with success probability
/// `1 - p`, and the battery alternates between 0 and 1 with `P(q = 0) = 1 - lambda`.
fn zero_wait_closed_form(pr: &SystemParams) -> (f64, f64) {
    (1.0 / (1.0 - pr.p), pr.omega * pr.c_r * (1.0 - pr.lambda_eh))
}

fn test_mode() -> SolverConfig {
    SolverConfig {
        allow_zero_omega: true,
        ..SolverConfig::default()
    }
}

#[test]
fn zero_wait_exact_matches_closed_form() {
    let pr = SystemParams::default().with_aoi_cap(400);
    let (aoi, energy) = zero_wait_closed_form(&pr);
    let r = evaluate_exact(&PolicySpec::ZeroWait, &pr).unwrap();
    assert_eq!(r.method, Method::ExactStationary);
    assert_eq!(r.ci_halfwidth_95, 0.0);
    assert!((r.avg_total_cost - 11.25).abs() < 1e-6);
    assert!((r.avg_aoi - aoi).abs() < 1e-6);
    assert!((r.avg_weighted_energy - energy).abs() < 1e-6);
}

#[test]
fn zero_omega_gain_is_geometric_mean_aoi() {
    for p in [0.1, 0.2, 0.6] {
        let pr = SystemParams {
            p,
            omega: 0.0,
            aoi_cap: 120,
            ..SystemParams::default()
        };
        let sol = solve_thresholds(&pr, &test_mode()).unwrap();
        assert!((sol.values.gain - 1.0 / (1.0 - p)).abs() < 1e-6, "p={p}");
        assert!(pr
            .states()
            .all(|s| sol.policy.action(s) == Action::Transmit));
    }
}

#[test]
fn enumeration_matches_solver_on_tiny_grids() {
    for battery_cap in [1, 2] {
        for (p, lambda, omega) in [(0.5, 0.5, 1.0), (0.2, 0.5, 10.0), (0.8, 0.3, 40.0)] {
            let pr = SystemParams {
                p,
                lambda_eh: lambda,
                omega,
                c_r: 2.0,
                battery_cap,
                aoi_cap: 4,
            };
            let (table, best) = enumerate_optimal(&pr).unwrap();
            let (v, _) = solve(&pr, &SolverConfig::default()).unwrap();
            assert!((best - v.gain).abs() < 1e-6, "{pr:?}: {best} vs {}", v.gain);
            extract_thresholds(&table).unwrap();
        }
    }
}

#[test]
fn enumeration_with_huge_omega_avoids_reliable_energy() {
    let pr = SystemParams {
        p: 0.5,
        lambda_eh: 0.5,
        omega: 1e6,
        c_r: 2.0,
        battery_cap: 1,
        aoi_cap: 4,
    };
    let (table, best) = enumerate_optimal(&pr).unwrap();
    let sol = solve_thresholds(&pr, &SolverConfig::default()).unwrap();
    assert_eq!(table, sol.policy);
    assert!((best - sol.values.gain).abs() < 1e-6);
    for aoi in 1..=4 {
        assert_eq!(table.action(State::new(aoi, 0)), Action::Idle);
    }
}

#[test]
fn enumeration_at_zero_omega_admits_always_transmit() {
    let pr = SystemParams {
        p: 0.5,
        lambda_eh: 0.5,
        omega: 0.0,
        c_r: 2.0,
        battery_cap: 1,
        aoi_cap: 4,
    };
    let (_, best) = enumerate_optimal(&pr).unwrap();
    let always = evaluate_exact_truncated(&PolicySpec::ZeroWait, &pr).unwrap();
    assert!((always.avg_total_cost - best).abs() < 1e-10);
}

#[test]
fn enumeration_refuses_large_grids() {
    let pr = SystemParams {
        battery_cap: 4,
        aoi_cap: 5,
        ..SystemParams::default()
    };
    assert!(matches!(
        enumerate_optimal(&pr),
        Err(Error::TooLarge {
            states: 25,
            limit: 24
        })
    ));
}

#[test]
fn solved_threshold_policy_exact_cost_equals_gain() {
    let pr = SystemParams::default();
    let sol = solve_thresholds(&pr, &SolverConfig::default()).unwrap();
    let r = evaluate_exact(&PolicySpec::Threshold(sol.thresholds.clone()), &pr).unwrap();
    assert!((r.avg_total_cost - sol.values.gain).abs() < 1e-6);
    assert!(sol.thresholds.finite_below(pr.aoi_cap));
}

#[test]
fn greedy_policy_idles_at_fresh_aoi_with_charge() {
    let pr = SystemParams::default();
    let sol = solve_thresholds(&pr, &SolverConfig::default()).unwrap();
    for q in 1..=pr.battery_cap {
        if sol.thresholds.thresholds[q as usize] != Threshold::At(1) {
            assert_eq!(sol.policy.action(State::new(1, q)), Action::Idle);
        }
    }
    // with the default parameters only a full battery transmits at AoI 1
    assert_eq!(sol.policy.action(State::new(1, 5)), Action::Idle);
    for s in pr.states() {
        if let Threshold::At(t) = sol.thresholds.thresholds[s.battery as usize] {
            assert_eq!(sol.policy.action(s).is_transmit(), s.aoi >= t);
        }
    }
}

/// Action values written out case by case from the kernel, independent of
/// the library's generic transition/expectation path.
fn q_by_cases(v: &aoi_energy::ValueTable, pr: &SystemParams, s: State, a: Action) -> f64 {
    let (p, l, b) = (pr.p, pr.lambda_eh, pr.battery_cap);
    let up = (s.aoi + 1).min(pr.aoi_cap);
    let val = |aoi: u32, q: u32| v.get(State::new(aoi, q));
    let d = s.aoi as f64;
    match a {
        Action::Idle if s.battery == b => d + val(up, b),
        Action::Idle => d + l * val(up, s.battery + 1) + (1.0 - l) * val(up, s.battery),
        Action::Transmit if s.battery == 0 => {
            d + pr.omega * pr.c_r
                + p * l * val(up, 1)
                + (1.0 - p) * l * val(1, 1)
                + p * (1.0 - l) * val(up, 0)
                + (1.0 - p) * (1.0 - l) * val(1, 0)
        }
        Action::Transmit => {
            let q = s.battery;
            d + p * l * val(up, q)
                + (1.0 - p) * l * val(1, q)
                + p * (1.0 - l) * val(up, q - 1)
                + (1.0 - p) * (1.0 - l) * val(1, q - 1)
        }
    }
}

#[test]
fn submodularity_margins_match_case_by_case_q() {
    let pr = SystemParams {
        battery_cap: 2,
        aoi_cap: 50,
        ..SystemParams::default()
    };
    let (v, q) = solve(&pr, &SolverConfig::default()).unwrap();
    for s in pr.states().filter(|s| s.aoi + 1 < pr.aoi_cap) {
        let hi = State::new(s.aoi + 1, s.battery);
        let adv = |x: State| {
            q_by_cases(&v, &pr, x, Action::Idle) - q_by_cases(&v, &pr, x, Action::Transmit)
        };
        let oracle = adv(hi) - adv(s);
        assert!(
            (submodularity_margin(&q, s) - oracle).abs() < 1e-10,
            "{s:?}"
        );
    }
    assert!(check_submodularity(&q, &pr, 1e-8).passed);
}

#[test]
fn bellman_residual_within_ten_epsilon() {
    let cfg = SolverConfig::default();
    for (p, lambda, omega) in [(0.2, 0.5, 10.0), (0.7, 0.2, 100.0), (0.4, 0.9, 1.0)] {
        let pr = SystemParams {
            p,
            lambda_eh: lambda,
            omega,
            aoi_cap: 150,
            ..SystemParams::default()
        };
        let (v, q) = solve(&pr, &cfg).unwrap();
        let res = pr
            .states()
            .map(|s| (q.min_value(s) - v.gain - v.get(s)).abs())
            .fold(0.0, f64::max);
        assert!(res <= 10.0 * cfg.epsilon, "{res}");
        for s in pr.states() {
            for a in Action::ALL {
                let qa = q_by_cases(&v, &pr, s, a);
                assert!((q.get(s, a) - qa).abs() < 1e-9 * qa.abs().max(1.0));
            }
        }
    }
}

#[test]
fn randomized_exact_agrees_with_monte_carlo() {
    let pr = SystemParams::default();
    let exact = evaluate_exact(&PolicySpec::randomized(), &pr).unwrap();
    let mc = simulate(
        &PolicySpec::randomized(),
        &pr,
        &SimConfig::new(400_000, 20, 17),
    )
    .unwrap();
    assert!(
        (mc.avg_total_cost - exact.avg_total_cost).abs() <= 3.0 * mc.ci_halfwidth_95,
        "{mc:?} vs {exact:?}"
    );
}

#[test]
fn every_baseline_mc_within_three_ci_of_exact() {
    let pr = SystemParams::default().with_aoi_cap(300);
    let cfg = SimConfig::new(300_000, 20, 5);
    for spec in [
        PolicySpec::ZeroWait,
        PolicySpec::EnergyFirst,
        PolicySpec::periodic(5),
        PolicySpec::periodic(10),
    ] {
        let exact = evaluate_exact(&spec, &pr).unwrap();
        let mc = simulate(&spec, &pr, &cfg).unwrap();
        assert!(
            (mc.avg_total_cost - exact.avg_total_cost).abs() <= 3.0 * mc.ci_halfwidth_95,
            "{spec}: {mc:?} vs {exact:?}"
        );
    }
}

#[test]
fn energy_first_never_pays_in_simulation() {
    for (p, lambda) in [(0.2, 0.5), (0.7, 0.1)] {
        let pr = SystemParams {
            p,
            lambda_eh: lambda,
            ..SystemParams::default()
        };
        let r = simulate(
            &PolicySpec::EnergyFirst,
            &pr,
            &SimConfig::new(100_000, 4, 3),
        )
        .unwrap();
        assert_eq!(r.avg_weighted_energy, 0.0);
        assert_eq!(r.avg_total_cost, r.avg_aoi);
    }
}

#[test]
fn perfect_channel_zero_wait_has_unit_aoi() {
    let pr = SystemParams {
        p: 0.0,
        ..SystemParams::default()
    };
    let r = simulate(&PolicySpec::ZeroWait, &pr, &SimConfig::new(50_000, 3, 1)).unwrap();
    assert_eq!(r.avg_aoi, 1.0);
    let e = evaluate_exact(&PolicySpec::ZeroWait, &pr).unwrap();
    assert!((e.avg_aoi - 1.0).abs() < 1e-12);
}

#[test]
fn initial_battery_does_not_matter() {
    let pr = SystemParams::default();
    let sol = solve_thresholds(&pr, &SolverConfig::default()).unwrap();
    for spec in [
        PolicySpec::Threshold(sol.thresholds),
        PolicySpec::EnergyFirst,
    ] {
        let empty = SimConfig::new(200_000, 20, 9);
        let full = SimConfig {
            initial_state: State::new(1, pr.battery_cap),
            ..empty
        };
        let a = simulate(&spec, &pr, &empty).unwrap();
        let b = simulate(&spec, &pr, &full).unwrap();
        let tol = a.ci_halfwidth_95 + b.ci_halfwidth_95;
        assert!(
            (a.avg_total_cost - b.avg_total_cost).abs() <= tol,
            "{spec}: {a:?} {b:?}"
        );
    }
}

#[test]
fn simulation_is_deterministic_per_seed() {
    let pr = SystemParams::default();
    let cfg = SimConfig::new(20_000, 6, 77);
    let a = simulate(&PolicySpec::randomized(), &pr, &cfg).unwrap();
    let b = simulate(&PolicySpec::randomized(), &pr, &cfg).unwrap();
    assert_eq!(a, b);
    let c = simulate(
        &PolicySpec::randomized(),
        &pr,
        &SimConfig { seed: 78, ..cfg },
    )
    .unwrap();
    assert_ne!(a, c);
}

#[test]
fn boundary_mass_guard_trips_on_small_cap() {
    let pr = SystemParams {
        p: 0.9,
        ..SystemParams::default()
    };
    match evaluate_exact(&PolicySpec::periodic(10), &pr) {
        Err(Error::BoundaryMass { mass, aoi_cap, .. }) => {
            assert_eq!(aoi_cap, 200);
            assert!(mass > 1e-9);
        }
        other => panic!("{other:?}"),
    }
    // the unguarded route still answers
    evaluate_exact_truncated(&PolicySpec::periodic(10), &pr).unwrap();
}

#[test]
fn sim_config_validation() {
    let pr = SystemParams::default();
    let bad = SimConfig {
        warmup: 10,
        ..SimConfig::new(10, 1, 0)
    };
    assert!(simulate(&PolicySpec::ZeroWait, &pr, &bad).is_err());
    let bad = SimConfig::new(100, 0, 0);
    assert!(simulate(&PolicySpec::ZeroWait, &pr, &bad).is_err());
    let single = simulate(&PolicySpec::ZeroWait, &pr, &SimConfig::new(100, 1, 0)).unwrap();
    assert!(single.ci_halfwidth_95.is_nan());
}

#[test]
fn reducible_chains() {
    // With lambda = 1 the battery never drains under zero-wait, so every
    // level >= 1 is its own closed class; all share the same cost.
    let pr = SystemParams {
        lambda_eh: 1.0,
        battery_cap: 3,
        aoi_cap: 60,
        ..SystemParams::default()
    };
    let st = stationary(&PolicySpec::ZeroWait, &pr).unwrap();
    assert_eq!(st.closed_classes, 3);
    assert!((st.avg_aoi - 1.25).abs() < 1e-9);

    // Transmit iff battery <= 1: level 1 refreshes forever, while a full
    // battery idles and parks at (aoi_cap, B). Two classes, two costs.
    let spec = PolicySpec::Table(PolicyTable::from_fn(&pr, |s| {
        if s.battery <= 1 {
            Action::Transmit
        } else {
            Action::Idle
        }
    }));
    match stationary(&spec, &pr) {
        Err(Error::Reducible { classes }) => {
            assert_eq!(classes.len(), 2);
            assert!(classes
                .iter()
                .any(|(s, c)| *s == State::new(60, 3) && *c == 60.0));
        }
        other => panic!("{other:?}"),
    }
}

mod props {
    use super::*;
    use proptest::prelude::*;

    fn spec_strategy() -> impl Strategy<Value = PolicySpec> {
        prop_oneof![
            Just(PolicySpec::ZeroWait),
            Just(PolicySpec::EnergyFirst),
            (1u32..6)
                .prop_flat_map(|period| (Just(period), 0..period))
                .prop_map(|(period, phase)| PolicySpec::Periodic { period, phase }),
            (0.0f64..=1.0).prop_map(|p_tx| PolicySpec::Randomized { p_tx }),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn stationary_vector_is_a_distribution(
            p in 0.05f64..0.95,
            lambda in 0.05f64..0.95,
            battery_cap in 1u32..5,
            spec in spec_strategy(),
        ) {
            let pr = SystemParams { p, lambda_eh: lambda, battery_cap, aoi_cap: 30, ..SystemParams::default() };
            let st = stationary(&spec, &pr).unwrap();
            let total: f64 = st.probs.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(st.probs.iter().all(|&x| x >= 0.0));
            prop_assert!(st.residual < 1e-12);
        }

        #[test]
        fn solved_policy_is_threshold_and_certified(
            p in 0.05f64..0.95,
            lambda in 0.0f64..=1.0,
            omega in 0.1f64..200.0,
            battery_cap in 1u32..6,
        ) {
            let pr = SystemParams { p, lambda_eh: lambda, omega, c_r: 2.0, battery_cap, aoi_cap: 80 };
            let sol = solve_thresholds(&pr, &SolverConfig::default()).unwrap();
            let report = aoi_energy::structure::check_all(&sol.values, &sol.q_table, 1e-8);
            prop_assert!(report.all_passed(), "{:?}", report);
        }
    }
}
