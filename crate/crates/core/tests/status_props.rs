//! Status history rules under arbitrary callback sequences.

use proptest::prelude::*;
use vtank_core::status::{Applied, DashboardStatus, StatusHistory, StepCode};

fn callback() -> impl Strategy<Value = (i8, u8)> {
    (-6i8..=6, 0u8..3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn history_stays_consistent(calls in prop::collection::vec(callback(), 0..40), jitter in prop::collection::vec(-5.0f64..5.0, 40)) {
        let mut h = StatusHistory::created(0.0);
        let mut t = 0.0;
        for (i, (step, msg)) in calls.iter().enumerate() {
            t += jitter[i % jitter.len()];
            let Some(step) = StepCode::new(*step) else { continue };
            let before = h.entries().len();
            let was_terminal = h.is_terminal();
            let a = h.apply(step, &format!("m{msg}"), t);
            prop_assert_eq!(a.changed(), h.entries().len() == before + 1);
            if was_terminal {
                prop_assert!(!a.changed());
            }
            prop_assert!(h.check().is_ok(), "{:?}", h.check());
        }
        // Replaying everything is a no-op.
        let snapshot = h.clone();
        for (step, msg) in &calls {
            if let Some(step) = StepCode::new(*step) {
                h.apply(step, &format!("m{msg}"), 1e9);
            }
        }
        prop_assert_eq!(h, snapshot);
    }

    #[test]
    fn magnitudes_never_decrease(calls in prop::collection::vec(callback(), 0..40)) {
        let mut h = StatusHistory::created(0.0);
        for (step, msg) in calls {
            if let Some(step) = StepCode::new(step) {
                h.apply(step, &format!("m{msg}"), 0.0);
            }
        }
        let mags: Vec<i8> = h.steps().iter().map(|s| s.abs()).collect();
        prop_assert!(mags.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(h.steps().iter().rev().skip(1).all(|s| *s >= 0 && *s != 6));
    }
}

#[test]
fn status_mapping_is_total() {
    for v in -6i8..=6 {
        let s = StepCode::new(v).unwrap().status();
        let expected = match v {
            0 => DashboardStatus::Created,
            1..=5 => DashboardStatus::Running,
            6 => DashboardStatus::Completed,
            _ => DashboardStatus::Error,
        };
        assert_eq!(s, expected, "step {v}");
    }
    assert!(StepCode::new(7).is_none());
    assert!(StepCode::new(-7).is_none());
}

#[test]
fn documented_callback_sequences() {
    let run = |steps: &[i8]| {
        let mut h = StatusHistory::created(0.0);
        let out: Vec<Applied> = steps.iter().map(|s| h.apply(StepCode::new(*s).unwrap(), "x", 1.0)).collect();
        (h.steps(), out)
    };
    assert_eq!(run(&[1, 2, 2, 3]).0, vec![0, 1, 2, 3]);
    let (steps, out) = run(&[3, 2]);
    assert_eq!(steps, vec![0, 3]);
    assert_eq!(out[1], Applied::Stale);
    let (steps, out) = run(&[-4, 5]);
    assert_eq!(steps, vec![0, -4]);
    assert_eq!(out[1], Applied::AfterTerminal);
}
