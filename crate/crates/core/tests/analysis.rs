use cima_core::analysis::{
    check_drift_region, enumerated_drift, exact_drift, lemma4_window_check, next_state_determinism_check,
    renewal_epochs, sample_reachable_states, transition, DriftCheckOptions, JointState, LyapunovParams,
};
use cima_core::belief::{brute_force_joint, verify_factorization, BeliefProfile};
use cima_core::{run_protocol, update_bounds, ArrivalRates, Feedback, ProtocolKind, Scalar};
use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use proptest::prelude::*;

fn ratio(n: i64, d: i64) -> Ratio<i64> {
    Ratio::new(n, d)
}

#[test]
fn drift_region_three_users() {
    let rates = vec![ratio(1, 5); 3];
    let params = LyapunovParams::new(&rates).unwrap();
    assert_eq!(params.alpha, ratio(1, 10));
    let mut options = DriftCheckOptions::new(22);
    options.mc_states = 3;
    options.mc_draws = 100_000;
    let report = check_drift_region(&rates, &options).unwrap();
    assert_eq!(report.violation_count, 0);
    assert!(report.passed(), "{:?}", report.monte_carlo);
    assert!(report.max_drift.unwrap() <= ratio(-1, 5));
}

#[test]
fn drift_region_near_capacity() {
    let rates = vec![ratio(3, 5), ratio(39, 100)];
    let params = LyapunovParams::new(&rates).unwrap();
    assert_eq!(params.epsilon, ratio(1, 100));
    let cap = params.inverse_alpha_ceil() + 2;
    assert_eq!(cap, 202);
    let mut options = DriftCheckOptions::new(cap);
    options.mc_states = 0;
    let report = check_drift_region(&rates, &options).unwrap();
    assert_eq!(report.violation_count, 0);
    assert!(report.states_checked > 0);
}

#[test]
fn drift_threshold_is_tight() {
    // With an empty selected queue, one step below the threshold the drift
    // misses -ε/2 by exactly ε/2.
    let rates = vec![ratio(1, 4), ratio(1, 4)];
    let below = JointState::new(vec![0, 3], vec![4, 0]).unwrap();
    assert_eq!(exact_drift(&below, &rates).unwrap(), ratio(0, 1));
    let at = JointState::new(vec![0, 3], vec![5, 0]).unwrap();
    assert_eq!(exact_drift(&at, &rates).unwrap(), ratio(-1, 4));
}

#[test]
fn belief_matches_brute_force_on_asymmetric_pair() {
    let rates = [0.3, 0.6];
    let report = verify_factorization(&rates, 3).unwrap();
    assert!(report.max_deviation < 1e-12);
    assert_eq!(report.bound_mismatches, 0);

    let joint = brute_force_joint(&rates, 1).unwrap();
    let idle = &joint[&vec![Feedback::Idle]];
    let profile = BeliefProfile::after_history(rates.to_vec(), &[Feedback::Idle]).unwrap();
    assert!((idle.history_probability - 1.0).abs() < 1e-15);
    for (q, p) in &idle.pmf {
        assert!((profile.joint_probability(q) - p).abs() < 1e-15);
    }
}

#[test]
fn three_user_belief_is_exact_in_rationals() {
    let rates: Vec<BigRational> = [(1, 5), (1, 3), (1, 4)]
        .iter()
        .map(|&(n, d)| BigRational::new(BigInt::from(n), BigInt::from(d)))
        .collect();
    let report = verify_factorization(&rates, 4).unwrap();
    assert_eq!(report.max_deviation, BigRational::from_u64(0));
    assert_eq!(report.bound_mismatches, 0);
}

#[test]
fn window_and_epoch_checks_hold_on_saturated_runs() {
    for (users, seed) in [(2usize, 1u64), (5, 2), (8, 3)] {
        let rates = ArrivalRates::symmetric(users, 0.97).unwrap();
        let out = run_protocol(ProtocolKind::Cima, &rates, 5000, seed).unwrap();
        assert!(lemma4_window_check(&out.trajectory).unwrap().passed());
        let epochs = renewal_epochs(&out.trajectory).unwrap();
        assert!(epochs.bound_violations.is_empty());
        assert!(epochs.closed_epochs > 0);
    }
}

#[test]
fn reachable_states_replay_deterministically() {
    let rates = ArrivalRates::symmetric(4, 0.8).unwrap();
    let samples = sample_reachable_states(&rates, 500, 1000, 7).unwrap();
    assert_eq!(samples.len(), 500);
    let report = next_state_determinism_check(&samples).unwrap();
    assert!(report.passed());
}

fn joint_state(max_users: usize, cap: u64) -> impl Strategy<Value = JointState> {
    (2..=max_users).prop_flat_map(move |n| {
        (prop::collection::vec(0..=cap, n), prop::collection::vec(0..=cap, n))
            .prop_map(|(q, b)| JointState::new(q, b).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closed_form_drift_equals_enumeration(state in joint_state(5, 12), numer in 1i64..20) {
        let n = state.users() as i64;
        let rates = vec![ratio(numer, 20 * n); state.users()];
        prop_assert_eq!(exact_drift(&state, &rates).unwrap(), enumerated_drift(&state, &rates).unwrap());
    }

    #[test]
    fn successor_bounds_follow_feedback(state in joint_state(6, 20), mask in any::<u8>()) {
        let arrivals: Vec<bool> = (0..state.users()).map(|i| mask >> i & 1 == 1).collect();
        let next = transition(&state, &arrivals).unwrap();
        let feedback = if state.queues[state.selected()] > 0 { Feedback::Success } else { Feedback::Idle };
        prop_assert_eq!(state.feedback(), feedback);
        prop_assert_eq!(next.bounds, update_bounds(&state.bounds, feedback).unwrap());
        prop_assert_eq!(transition(&state, &arrivals).unwrap(), transition(&state, &arrivals).unwrap());
    }

    #[test]
    fn factorization_is_exact_for_rational_pairs(a in 1i64..10, b in 1i64..10, horizon in 1usize..5) {
        let rates = [BigRational::from_ratio(a, 10), BigRational::from_ratio(b, 10)];
        let report = verify_factorization(&rates, horizon).unwrap();
        prop_assert_eq!(report.max_deviation, BigRational::from_u64(0));
        prop_assert_eq!(report.bound_mismatches, 0);
    }

    #[test]
    fn service_window_holds(users in 2usize..8, load in 0.05f64..0.99, seed in any::<u64>()) {
        let rates = ArrivalRates::symmetric(users, load).unwrap();
        let out = run_protocol(ProtocolKind::Cima, &rates, 400, seed).unwrap();
        let check = lemma4_window_check(&out.trajectory).unwrap();
        prop_assert!(check.passed(), "{:?}", check.first_violation);
        prop_assert!(renewal_epochs(&out.trajectory).unwrap().bound_violations.is_empty());
    }
}
