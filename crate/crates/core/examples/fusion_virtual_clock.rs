// SPDX-License-Identifier: Apache-2.0

//! Run the 30 Hz loop on a virtual clock. Pedals go quiet at 1 s and the
//! operator client disappears at 2 s; watch the safety state change.

use std::sync::RwLock;

use teleop_core::fusion::{run_loop, Fuser, InputHub, Shutdown, SinkError};
use teleop_core::{pedal_bits, Clock, PedalState, UnifiedCommand, VirtualClock};

fn main() {
    let clock = VirtualClock::new();
    let hub = InputHub::new();
    let fuser = RwLock::new(Fuser::default());
    let shutdown = Shutdown::new();
    let mut last_safety = None;
    let report = {
        let (clock, hub, stopper) = (clock.clone(), hub.clone(), shutdown.clone());
        let mut sink = |c: &UnifiedCommand| -> Result<(), SinkError> {
            if last_safety != Some(c.safety) {
                println!(
                    "tick {:>3} t={:>4} ms  {:?}  base ({:+.2}, {:+.2}, {:+.2})",
                    c.tick, c.timestamp_ms, c.safety, c.base.vx, c.base.vy, c.base.omega
                );
                last_safety = Some(c.safety);
            }
            let now = clock.now_ms();
            if now < 1000 {
                hub.update_pedals(PedalState::from_bits(pedal_bits::FORWARD, now), now);
            }
            if now < 2000 {
                hub.touch_client(now);
            }
            if now >= 4000 {
                stopper.trigger();
            }
            Ok(())
        };
        run_loop(&clock, &hub, &fuser, &mut sink, &shutdown, None).unwrap()
    };
    println!(
        "{} ticks, {:.3} Hz mean over {:?} of virtual time",
        report.ticks, report.mean_rate_hz, report.elapsed
    );
}
