use fstta_core::fast::FastConfig;
use fstta_core::slow::{reference_direction, slow_gradient, SlowConfig};
use fstta_core::{AdaptConfig, AdaptSession, Strategy};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const D: usize = 6;

fn config() -> AdaptConfig {
    AdaptConfig {
        fast: FastConfig { base_lr: 0.05, ..FastConfig::default() },
        slow: SlowConfig { lr: 1.0, ..SlowConfig::default() },
        tent_lr: 0.05,
    }
}

fn grad(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..D).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn session(strategy: Strategy) -> AdaptSession {
    AdaptSession::new(strategy, config(), vec![0.5; D]).unwrap()
}

/// Feeds `steps[s]` gradients to sample `s`.
fn drive(s: &mut AdaptSession, steps: &[usize], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for &t in steps {
        for _ in 0..t {
            s.on_action_step(&grad(&mut rng)).unwrap();
        }
        s.on_sample_end().unwrap();
    }
}

fn expected_fast(steps: &[usize], m: usize) -> usize {
    steps.iter().map(|t| t / m + usize::from(t % m >= 2)).sum()
}

proptest! {
    #[test]
    fn update_counts_follow_the_schedule(steps in prop::collection::vec(0usize..12, 1..14)) {
        let mut s = session(Strategy::FastSlow { dlr: true });
        drive(&mut s, &steps, 3);
        let c = s.counters();
        let cfg = config();
        prop_assert_eq!(c.fast_updates, expected_fast(&steps, cfg.fast.window));
        prop_assert_eq!(c.slow_updates, steps.len() / cfg.slow.interval);
        prop_assert_eq!(c.samples, steps.len());
        prop_assert_eq!(s.trajectory().recorded(), steps.len() % cfg.slow.interval);
    }
}

#[test]
fn partial_windows_flush_or_discard() {
    let mut s = session(Strategy::FastOnly { dlr: true });
    drive(&mut s, &[2, 1, 4, 5], 9);
    let c = s.counters();
    assert_eq!(c.fast_updates, 1 + 0 + 1 + 2);
    assert_eq!(c.flushed, 2);
    assert_eq!(c.discarded, 2);
    assert_eq!(s.pending(), 0);
    assert_eq!(c.slow_updates, 0);
}

#[test]
fn slow_update_moves_from_the_anchor() {
    let cfg = config();
    let mut s = session(Strategy::FastSlow { dlr: true });
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for round in 0..3 {
        let anchor = s.anchor().to_vec();
        for sample in 0..cfg.slow.interval {
            for _ in 0..6 {
                s.on_action_step(&grad(&mut rng)).unwrap();
            }
            if sample + 1 < cfg.slow.interval {
                s.on_sample_end().unwrap();
            }
        }
        // Rebuild the trajectory the session will see once the last state is recorded.
        let mut traj = s.trajectory().clone();
        traj.record(s.theta()).unwrap();
        let h = reference_direction(&traj, cfg.slow.q);
        let g = slow_gradient(&traj, &h, cfg.slow.eig_tol, cfg.slow.sign_tol).unwrap();
        s.on_sample_end().unwrap();
        assert_eq!(s.counters().slow_updates, round + 1);
        for ((new, old), gi) in s.anchor().iter().zip(&anchor).zip(&g) {
            assert_eq!(*new, old - cfg.slow.lr * gi);
        }
        assert_eq!(s.theta(), s.anchor());
    }
}

#[test]
fn noadapt_is_bit_identical_to_pristine() {
    let mut s = session(Strategy::NoAdapt);
    drive(&mut s, &[7, 3, 9, 2, 5], 1);
    assert_eq!(s.theta(), s.pristine());
    assert_eq!(s.counters().fast_updates, 0);
}

#[test]
fn tent_stable_resets_every_sample() {
    let mut s = session(Strategy::TentStable);
    drive(&mut s, &[4], 2);
    assert_eq!(s.theta(), s.pristine());
    assert_eq!(s.counters().fast_updates, 4);
}

#[test]
fn tent_interval_steps_with_the_plain_mean() {
    let mut s = session(Strategy::TentInterval(2));
    let (a, b) = (vec![1.0; D], vec![3.0; D]);
    s.on_action_step(&a).unwrap();
    s.on_action_step(&b).unwrap();
    for v in s.theta() {
        assert_eq!(*v, 0.5 - 0.05 * 2.0);
    }
}

#[test]
fn non_finite_gradients_are_quarantined() {
    let mut s = session(Strategy::FastSlow { dlr: true });
    let mut bad = vec![0.1; D];
    bad[2] = f64::NAN;
    s.on_action_step(&bad).unwrap();
    bad[2] = f64::INFINITY;
    s.on_action_step(&bad).unwrap();
    s.on_sample_end().unwrap();
    let c = s.counters();
    assert_eq!(c.quarantined, 2);
    assert_eq!(c.fast_updates, 0);
    assert!(s.theta().iter().all(|v| v.is_finite()));
    assert!(s.on_action_step(&[0.0; D - 1]).is_err());
}

#[test]
fn sessions_are_deterministic() {
    for strategy in [Strategy::FastSlow { dlr: true }, Strategy::FastOnly { dlr: false }, Strategy::TentInterval(3)] {
        let (mut a, mut b) = (session(strategy), session(strategy));
        drive(&mut a, &[6, 4, 8, 3, 5, 7], 77);
        drive(&mut b, &[6, 4, 8, 3, 5, 7], 77);
        assert_eq!(a.theta(), b.theta(), "{strategy}");
        assert_eq!(a.counters(), b.counters());
    }
}

#[test]
fn strategy_names_round_trip() {
    for s in [
        Strategy::NoAdapt,
        Strategy::TentInterval(4),
        Strategy::TentStable,
        Strategy::FastOnly { dlr: true },
        Strategy::FastOnly { dlr: false },
        Strategy::FastSlow { dlr: true },
        Strategy::FastSlow { dlr: false },
    ] {
        assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
    }
    assert!("tent-int-0".parse::<Strategy>().is_err());
    assert!("eata".parse::<Strategy>().is_err());
}
