//! Property suite for the trigger monitor: equivalence with a
//! brute-force per-dimension consecutive-run oracle, and monotonicity of
//! total trigger count in the threshold.

use proptest::prelude::*;
use uora_core::linalg::{InitKind, Vector};
use uora_core::reinit::{ReinitConfig, ReinitMonitor};

/// Direct transcription of the trigger rule, simulated one dimension at
/// a time with a plain streak counter.
fn oracle_triggers(traj: &[Vec<f64>], tau: f64, k: usize) -> Vec<Vec<usize>> {
    let r = traj.first().map_or(0, |v| v.len());
    let mut streak = vec![0usize; r];
    let mut fired_per_step = Vec::with_capacity(traj.len());
    for step_vals in traj {
        let mut fired = Vec::new();
        for (i, v) in step_vals.iter().enumerate() {
            if v.abs() < tau {
                streak[i] += 1;
                if k > 0 && streak[i] == k {
                    fired.push(i);
                    streak[i] = 0;
                }
            } else {
                streak[i] = 0;
            }
        }
        fired_per_step.push(fired);
    }
    fired_per_step
}

fn monitor_triggers(traj: &[Vec<f64>], tau: f64, k: usize) -> Vec<Vec<usize>> {
    let r = traj.first().map_or(0, |v| v.len());
    let config = ReinitConfig::new(tau, k, 0.7, InitKind::orthogonal()).unwrap();
    let mut monitor = ReinitMonitor::new(r, config);
    traj.iter()
        .enumerate()
        .map(|(step, vals)| {
            monitor
                .observe_step(&Vector::from_slice(vals), step as u64)
                .unwrap()
        })
        .collect()
}

fn total(fired: &[Vec<usize>]) -> usize {
    fired.iter().map(|f| f.len()).sum()
}

/// Values concentrated around the thresholds under test so both branches
/// of the comparison get exercised.
fn d_value() -> impl Strategy<Value = f64> {
    prop_oneof![
        3 => (-1.0f64..1.0).prop_map(|v| v * 1e-3),
        2 => -1.0f64..1.0,
        1 => Just(0.0),
    ]
}

fn trajectory() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..=16, 1usize..=1000).prop_flat_map(|(r, len)| {
        prop::collection::vec(prop::collection::vec(d_value(), r), len)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn monitor_equals_brute_force_oracle(
        traj in trajectory(),
        tau_exp in 0usize..4,
        k in 0usize..=4,
    ) {
        let tau = [5e-5, 1e-4, 5e-4, 1e-3][tau_exp];
        prop_assert_eq!(monitor_triggers(&traj, tau, k), oracle_triggers(&traj, tau, k));
    }

    #[test]
    fn trigger_count_is_nondecreasing_in_tau(
        traj in trajectory(),
        k in 1usize..=4,
    ) {
        let taus = [1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 1e-2, 1.0];
        let counts: Vec<usize> = taus
            .iter()
            .map(|tau| total(&monitor_triggers(&traj, *tau, k)))
            .collect();
        for pair in counts.windows(2) {
            prop_assert!(pair[0] <= pair[1], "counts not monotone: {:?}", counts);
        }
    }
}

#[test]
fn long_dense_trajectory_matches_oracle_for_all_small_k() {
    // One deterministic worst-case-sized run: 1000 steps, 16 dims.
    let mut rng = uora_core::linalg::SeededRng::new(99, 0);
    let traj: Vec<Vec<f64>> = (0..1000)
        .map(|_| (0..16).map(|_| rng.uniform(2e-4)).collect())
        .collect();
    for k in 0..=4 {
        assert_eq!(
            monitor_triggers(&traj, 1e-4, k),
            oracle_triggers(&traj, 1e-4, k),
            "k = {k}"
        );
    }
}
