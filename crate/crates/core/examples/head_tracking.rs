// SPDX-License-Identifier: Apache-2.0

//! Feed a handful of orientation messages through a head session and print
//! the resulting head commands. The first message calibrates.

use teleop_core::head::{HeadControlConfig, HeadSession};

fn main() {
    let mut session = HeadSession::new(HeadControlConfig::default());
    let msgs = [
        r#"{"roll":2,"pitch":0,"yaw":170,"seq":1}"#,
        r#"{"roll":12,"pitch":0,"yaw":-170,"seq":2}"#,
        r#"{"roll":12,"pitch":0,"yaw":-100,"seq":3}"#,
        r#"{"roll":"x","pitch":0,"yaw":0,"seq":4}"#,
        r#"{"roll":0,"pitch":0,"yaw":160,"seq":2}"#,
    ];
    for (i, m) in msgs.iter().enumerate() {
        match session.handle_message(m, i as u64 * 16) {
            Ok(Some(cmd)) => println!("{m}\n  -> yaw {:+.1} roll {:+.1}", cmd.yaw, cmd.roll),
            Ok(None) => println!("{m}\n  -> dropped (stale seq)"),
            Err(e) => println!("{m}\n  -> rejected: {e}"),
        }
    }

    session.request_recalibration();
    let cmd = session
        .handle_message(r#"{"roll":12,"pitch":0,"yaw":-100,"seq":9}"#, 200)
        .unwrap()
        .unwrap();
    println!("after recalibration: yaw {:+.1} roll {:+.1}", cmd.yaw, cmd.roll);
}
