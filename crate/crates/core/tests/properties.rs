//! Randomized invariants across the relaxation and synchronization modules.

use ftva::hetero::solve_het;
use ftva::lp::solve_relaxation;
use ftva::sync::{check_sa_reachability, check_sufficient_conditions, exact_sync_times};
use ftva::{ArmModel, DtModel, Instance, RbInstance};
use proptest::prelude::*;

fn normalize(w: Vec<f64>) -> Vec<f64> {
    let t: f64 = w.iter().sum();
    w.into_iter().map(|x| x / t).collect()
}

/// Random discrete-time instance with 2..=4 states. Zero weights make
/// sparse rows likely, so both the satisfied and failing sides of the
/// synchronization checks get exercised.
fn instance() -> impl Strategy<Value = RbInstance> {
    (2usize..=4).prop_flat_map(|n| {
        let row = prop::collection::vec(prop_oneof![Just(0.0), 0.05f64..1.0], n)
            .prop_filter("non-zero row", |r| r.iter().any(|&x| x > 0.0));
        (
            prop::collection::vec((row.clone(), row), n),
            prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), n),
            prop_oneof![Just(0.25), Just(0.5), Just(0.75)],
        )
            .prop_map(|(rows, rewards, alpha)| {
                let transition = rows
                    .into_iter()
                    .map(|(p0, p1)| [normalize(p0), normalize(p1)])
                    .collect();
                let reward = rewards.into_iter().map(|(a, b)| [a, b]).collect();
                let model = DtModel::new(transition, reward).unwrap();
                Instance::homogeneous(ArmModel::Dt(model), alpha).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn relaxation_is_a_stationary_measure_on_budget(inst in instance()) {
        let m = inst.model().as_dt().unwrap();
        let y = solve_relaxation(&inst).unwrap();
        let y = y.homogeneous();
        let n = m.n_states();
        let active: f64 = y.iter().map(|r| r[1]).sum();
        prop_assert!((active - inst.alpha()).abs() < 1e-8);
        let mass: f64 = y.iter().map(|r| r[0] + r[1]).sum();
        prop_assert!((mass - 1.0).abs() < 1e-8);
        for t in 0..n {
            let inflow: f64 = (0..n).map(|s| y[s][0] * m.p(s, 0, t) + y[s][1] * m.p(s, 1, t)).sum();
            prop_assert!((inflow - y[t][0] - y[t][1]).abs() < 1e-8);
            prop_assert!(y[t][0] >= -1e-12 && y[t][1] >= -1e-12);
        }
    }

    #[test]
    fn value_is_label_free_and_shift_equivariant(inst in instance(), c in -1.0f64..1.0) {
        let v = solve_het(&inst).unwrap().value;
        let n = inst.model().n_states();
        let perm: Vec<usize> = (0..n).rev().collect();
        let vp = solve_het(&inst.permute_states(&perm)).unwrap().value;
        prop_assert!((v - vp).abs() < 1e-9);
        let shifted = Instance::homogeneous(inst.model().shift_rewards(c), inst.alpha()).unwrap();
        let vs = solve_het(&shifted).unwrap().value;
        prop_assert!((vs - v - c).abs() < 1e-9);
    }

    #[test]
    fn propositions_imply_reachability(inst in instance()) {
        let m = inst.model().as_dt().unwrap();
        let pol = solve_het(&inst).unwrap().policies.remove(0);
        let cond = check_sufficient_conditions(m, &pol).unwrap();
        let reach = check_sa_reachability(m, &pol).unwrap();
        if !cond.satisfied.is_empty() {
            prop_assert!(reach.holds, "{:?} without reachability", cond.satisfied);
        }
        match exact_sync_times(m, &pol) {
            Ok(report) => {
                prop_assert!(reach.holds);
                for e in &report.tau_table {
                    if e.start.s == e.start.s_hat {
                        prop_assert_eq!(e.tau, 0.0);
                    } else {
                        prop_assert!(e.tau >= 1.0 - 1e-12 && e.tau <= report.tau_max + 1e-9);
                    }
                }
            }
            Err(_) => prop_assert!(!reach.holds),
        }
    }
}
