use banditq_core::env::{benchmark_rates, solve_reference_lp, RatePair};
use banditq_core::mab::{project_floored_simplex, LearnerState, MixedAction, StepParams};
use banditq_core::sim::{advance_queue_into, run_once, RecordOptions};
use banditq_core::verify::{grid_projection_oracle, lp_bisection_oracle};
use banditq_core::{EnvironmentSpec, PolicyDescriptor, PolicyKind, Process};
use proptest::prelude::*;

fn scaled_vec(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, k).prop_map(|v| v.into_iter().map(f64::exp).collect())
}

fn instance() -> impl Strategy<Value = (Vec<f64>, f64)> {
    (2usize..=4).prop_flat_map(|k| {
        (scaled_vec(k), prop_oneof![Just(0.0), Just(1e-3), Just(0.2 / k as f64)])
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_lands_on_floored_simplex((scaled, beta) in instance()) {
        let y = project_floored_simplex(&scaled, beta).unwrap();
        let sum: f64 = y.as_slice().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        prop_assert!(y.respects_floor(beta));
    }

    #[test]
    fn projection_is_idempotent((scaled, beta) in instance()) {
        let y = project_floored_simplex(&scaled, beta).unwrap();
        let z = project_floored_simplex(y.as_slice(), beta).unwrap();
        for (a, b) in y.as_slice().iter().zip(z.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn projection_keeps_proportions_on_free_set((scaled, beta) in instance()) {
        let y = project_floored_simplex(&scaled, beta).unwrap();
        let free: Vec<usize> = (0..scaled.len()).filter(|&i| y.as_slice()[i] > beta).collect();
        for w in free.windows(2) {
            let (i, j) = (w[0], w[1]);
            let lhs = y.as_slice()[i] / y.as_slice()[j];
            let rhs = scaled[i] / scaled[j];
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0) * 10.0);
        }
    }

    #[test]
    fn projection_matches_grid_oracle((scaled, beta) in instance()) {
        let closed = project_floored_simplex(&scaled, beta).unwrap();
        let grid = grid_projection_oracle(&scaled, beta, 1e-3);
        for (a, b) in closed.as_slice().iter().zip(grid.as_slice()) {
            prop_assert!((a - b).abs() <= 2e-3, "{:?} vs {:?}", closed, grid);
        }
    }

    #[test]
    fn raising_a_coordinate_never_lowers_it((scaled, beta) in instance(), idx in 0usize..4, factor in 1.0f64..50.0) {
        let i = idx % scaled.len();
        let before = project_floored_simplex(&scaled, beta).unwrap();
        let mut bumped = scaled.clone();
        bumped[i] *= factor;
        let after = project_floored_simplex(&bumped, beta).unwrap();
        prop_assert!(after.as_slice()[i] >= before.as_slice()[i] - 1e-15);
    }

    #[test]
    fn learner_exponent_stays_below_one(
        k in 2usize..6,
        gamma in 0.01f64..0.5,
        eta in 1e-4f64..1.0,
        frac in 0.0f64..=1.0,
        arm_seed in 0usize..100,
    ) {
        let arm = arm_seed % k;
        let p = StepParams::new(eta, 0.0, gamma, MixedAction::uniform(k)).unwrap();
        let reward = frac * p.reward_bound(arm);
        let mut s = LearnerState::uniform(k);
        prop_assert!(s.feed_reward(&p, arm, reward).is_ok());
        // x'_arm / x'_other = exp(eta g~) <= e
        let x = s.x().as_slice();
        let other = (arm + 1) % k;
        prop_assert!(x[arm] / x[other] <= std::f64::consts::E * (1.0 + 1e-12));
    }

    #[test]
    fn lp_closed_form_matches_bisection(
        lambda in prop::collection::vec(0.0f64..0.5, 1..6),
        sigma_seed in prop::collection::vec(0.05f64..1.0, 6),
    ) {
        let sigma = sigma_seed[..lambda.len()].to_vec();
        let rates = RatePair::new(lambda, sigma).unwrap();
        let a = solve_reference_lp(&rates).unwrap();
        let b = lp_bisection_oracle(&rates).unwrap();
        prop_assert!((a.eps - b.eps).abs() < 1e-8);
        let total: f64 = a.theta.as_slice().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        if a.feasible {
            for i in 0..rates.queues() {
                let slack = a.theta.as_slice()[i] * rates.sigma[i] - rates.lambda[i] - a.eps;
                prop_assert!(slack.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn queue_recursion_is_nonnegative(
        q in prop::collection::vec(0.0f64..20.0, 3),
        a in prop::collection::vec(0.0f64..1.0, 3),
        s in 0.0f64..5.0,
        action in 0usize..3,
    ) {
        let mut out = vec![0.0; 3];
        advance_queue_into(&q, &a, s, action, &mut out);
        for i in 0..3 {
            prop_assert!(out[i] >= 0.0);
            if i != action {
                prop_assert_eq!(out[i], q[i] + a[i]);
            }
        }
    }
}

fn small_env() -> banditq_core::Environment {
    EnvironmentSpec {
        queues: 3,
        bound: 1.0,
        horizon: 3000,
        arrivals: Process::Bernoulli { rates: vec![0.3, 0.2, 0.1] },
        services: Process::Ar1Bernoulli { rates: vec![0.9, 0.6, 0.5], phi: 0.99, sd: 0.02 },
        noise_seed: 4,
    }
    .prepare()
    .unwrap()
}

fn bandits() -> Vec<PolicyDescriptor> {
    vec![
        PolicyDescriptor::bandit(PolicyKind::SoftMw, 0.1),
        PolicyDescriptor::bandit(PolicyKind::Ssmw, 0.0),
        PolicyDescriptor::bandit(PolicyKind::SoftMwPlus, 0.5).with_alpha(16.0),
        PolicyDescriptor::bandit(PolicyKind::SsmwPlus, 0.1),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn identical_seeds_replay_actions(seed in 0u64..1_000_000) {
        let env = small_env();
        for d in bandits() {
            let a = run_once(&env, &d, seed, &RecordOptions::default()).unwrap();
            let b = run_once(&env, &d, seed, &RecordOptions::default()).unwrap();
            prop_assert_eq!(&a.actions, &b.actions);
            prop_assert_eq!(&a.fed, &b.fed);
        }
    }
}

#[test]
fn fed_feedback_follows_clipping_rules() {
    let env = small_env();
    let opts = RecordOptions::default();
    let d = PolicyDescriptor::bandit(PolicyKind::SoftMwPlus, 0.5).with_alpha(16.0);
    let rec = run_once(&env, &d, 11, &opts).unwrap();
    let k = rec.queues;
    for t in 1..=rec.horizon {
        let a = rec.actions[t - 1];
        let q_prev = if t == 1 { 0.0 } else { rec.queue_samples[(t - 2) * k + a] };
        let s = rec.services[t - 1];
        let clipped = if s <= (t as f64).powf(0.5 / 4.0) { s } else { 0.0 };
        assert_eq!(rec.fed[t - 1], q_prev * clipped, "slot {t}");
    }

    let d = PolicyDescriptor::bandit(PolicyKind::SoftMw, 0.1);
    let rec = run_once(&env, &d, 11, &opts).unwrap();
    for t in 2..=rec.horizon {
        let a = rec.actions[t - 1];
        assert_eq!(rec.fed[t - 1], rec.queue_samples[(t - 2) * k + a] * rec.services[t - 1]);
    }
}

#[test]
fn ssmw_epochs_tile_the_horizon() {
    let env = small_env();
    for d in [PolicyDescriptor::bandit(PolicyKind::Ssmw, 0.1), PolicyDescriptor::bandit(PolicyKind::SsmwPlus, 0.1)] {
        let rec = run_once(&env, &d, 3, &RecordOptions::default()).unwrap();
        let k = rec.queues;
        let starts = &rec.epoch_starts;
        assert_eq!(starts[0], 1);
        for w in starts.windows(2) {
            let t0 = w[0] - 1;
            let snapshot_inf = if t0 == 0 {
                0.0
            } else {
                rec.queue_samples[(t0 - 1) * k..t0 * k].iter().copied().fold(0.0, f64::max)
            };
            let m = ((snapshot_inf / 2.0).ceil() as usize).max(1);
            assert_eq!(w[1] - w[0], m, "epoch starting at {}", w[0]);
        }
    }
}

#[test]
fn benchmark_instance_is_barely_feasible() {
    let a = solve_reference_lp(&benchmark_rates()).unwrap();
    assert!(a.feasible && a.eps < 1e-3);
}
