// SPDX-License-Identifier: Apache-2.0

use proptest::prelude::*;
use teleop_core::head::{calibrate, normalize, HeadControlConfig, HeadError, HeadSession, RollSource};
use teleop_core::{wrap180, HeadCommand, OrientationSample};

fn sample(roll: f64, pitch: f64, yaw: f64, seq: u64) -> OrientationSample {
    OrientationSample {
        roll,
        pitch,
        yaw,
        timestamp_ms: seq,
        seq,
    }
}

fn angle() -> impl Strategy<Value = f64> {
    -180.0f64..=180.0
}

proptest! {
    #[test]
    fn outputs_stay_in_range(s in (angle(), angle(), angle()), r in (angle(), angle(), angle()),
                             inv_y: bool, inv_r: bool, pitch_roll: bool) {
        let cfg = HeadControlConfig {
            invert_yaw: inv_y,
            invert_roll: inv_r,
            roll_source: if pitch_roll { RollSource::PhonePitch } else { RollSource::PhoneRoll },
            ..Default::default()
        };
        let out = normalize(&sample(s.0, s.1, s.2, 1), &calibrate(&sample(r.0, r.1, r.2, 0)), &cfg);
        prop_assert!((-90.0..=90.0).contains(&out.yaw));
        prop_assert!((-90.0..=90.0).contains(&out.roll));
    }

    #[test]
    fn zero_reference(s in (angle(), angle(), angle())) {
        let smp = sample(s.0, s.1, s.2, 1);
        prop_assert_eq!(normalize(&smp, &calibrate(&smp), &HeadControlConfig::default()), HeadCommand::ZERO);
    }

    #[test]
    fn monotonic_inside_clamp(r in angle(), a in -89.0f64..89.0, b in -89.0f64..89.0) {
        prop_assume!((a - b).abs() > 1e-6);
        let cfg = HeadControlConfig::default();
        let reference = calibrate(&sample(0.0, 0.0, r, 0));
        let ya = normalize(&sample(0.0, 0.0, wrap180(r + a).unwrap(), 1), &reference, &cfg).yaw;
        let yb = normalize(&sample(0.0, 0.0, wrap180(r + b).unwrap(), 1), &reference, &cfg).yaw;
        prop_assert_eq!(a < b, ya < yb);
    }

    #[test]
    fn inversion_flips_sign(s in angle(), r in angle()) {
        let plain = HeadControlConfig::default();
        let inv = HeadControlConfig { invert_yaw: true, ..Default::default() };
        let reference = calibrate(&sample(0.0, 0.0, r, 0));
        let a = normalize(&sample(0.0, 0.0, s, 1), &reference, &plain).yaw;
        let b = normalize(&sample(0.0, 0.0, s, 1), &reference, &inv).yaw;
        prop_assert_eq!(a, -b);
    }
}

#[test]
fn first_sample_calibrates_and_recalibration_rezeroes() {
    let mut session = HeadSession::new(HeadControlConfig::default());
    let first = session.handle_message(r#"{"roll":5,"pitch":0,"yaw":40,"seq":1}"#, 10).unwrap();
    assert_eq!(first, Some(HeadCommand::ZERO));
    let turned = session.handle_message(r#"{"roll":5,"pitch":0,"yaw":70,"seq":2}"#, 20).unwrap();
    assert_eq!(turned, Some(HeadCommand { yaw: 30.0, roll: 0.0 }));

    session.request_recalibration();
    let same_pose = session.handle_message(r#"{"roll":5,"pitch":0,"yaw":70,"seq":3}"#, 30).unwrap();
    assert_eq!(same_pose, Some(HeadCommand::ZERO));
    assert_eq!(session.reference().unwrap().established_at_ms, 30);
}

#[test]
fn stale_sequence_numbers_are_dropped() {
    let mut session = HeadSession::new(HeadControlConfig::default());
    session.handle_message(r#"{"roll":0,"pitch":0,"yaw":0,"seq":5}"#, 0).unwrap();
    assert_eq!(session.handle_message(r#"{"roll":0,"pitch":0,"yaw":50,"seq":5}"#, 1).unwrap(), None);
    assert_eq!(session.handle_message(r#"{"roll":0,"pitch":0,"yaw":50,"seq":4}"#, 2).unwrap(), None);
    assert!(session.handle_message(r#"{"roll":0,"pitch":0,"yaw":50,"seq":6}"#, 3).unwrap().is_some());
}

#[test]
fn malformed_messages_leave_session_usable() {
    let mut session = HeadSession::new(HeadControlConfig::default());
    for bad in [
        r#"{"roll":"x","pitch":0,"yaw":0,"seq":3}"#,
        r#"{"roll":0,"pitch":0,"seq":3}"#,
        r#"{"roll":0,"pitch":0,"yaw":0,"seq":-1}"#,
        "not json",
    ] {
        assert!(matches!(session.handle_message(bad, 0), Err(HeadError::Malformed(_))), "{bad}");
    }
    assert!(session.reference().is_none());
    assert!(session.handle_message(r#"{"roll":0,"pitch":0,"yaw":0,"seq":1,"t":12.5}"#, 0).unwrap().is_some());
}
