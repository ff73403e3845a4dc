// SPDX-License-Identifier: Apache-2.0

//! Wall-clock run of the threaded runtime with scripted pedals.
//!
//! `cargo run --release --example realtime_loop -- 10` runs for ten seconds.

use std::sync::Arc;
use std::time::Duration;

use teleop_core::input::{parse_pedal_script, SimulatedPedalSource};
use teleop_core::runtime::{Runtime, RuntimeConfig};
use teleop_core::{Clock, MonotonicClock};

const SCRIPT: &str = "\
# t_ms pedals
0     F
1500  F+L
2500  none
3000  R
4000  none
";

fn main() {
    let secs: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(5);
    let clock: Arc<dyn Clock> = Arc::new(MonotonicClock::new());
    let rt = Runtime::start(RuntimeConfig::default(), clock.clone()).unwrap();
    let pedals = SimulatedPedalSource::new(parse_pedal_script(SCRIPT).unwrap()).unwrap();
    rt.attach_pedals(Box::new(pedals.into_reader(clock, rt.shutdown_handle()))).unwrap();

    for _ in 0..secs * 4 {
        rt.hub().touch_client(rt.now_ms());
        std::thread::sleep(Duration::from_millis(250));
        let m = rt.monitor().status();
        if m.tick % 30 < 8 {
            let p = rt.robot_state().pose;
            println!(
                "tick {:>4}  {:.2} Hz  p99 {:.3} ms  pose ({:+.3}, {:+.3}, {:+.1} deg)",
                m.tick, m.rate_hz, m.jitter.p99_ms, p.x, p.y, p.heading
            );
        }
    }
    let report = rt.shutdown();
    let lr = report.loop_report.unwrap();
    println!(
        "done: {} ticks, mean {:.3} Hz, jitter p50 {:.3} ms p99 {:.3} ms max {:.3} ms, {} overruns",
        lr.ticks, lr.mean_rate_hz, lr.jitter.p50_ms, lr.jitter.p99_ms, lr.jitter.max_ms, lr.overruns
    );
}
