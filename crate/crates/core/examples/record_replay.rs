// SPDX-License-Identifier: Apache-2.0

//! Run a scripted session into an episode file and replay it.
//!
//! Pass a path to keep the episode; otherwise it goes to a temp directory.

use std::path::PathBuf;

use teleop_core::input::{parse_pedal_script, LeaderKeyframe, SimulatedLeaderSource, SimulatedPedalSource};
use teleop_core::recorder::{read_episode, replay};
use teleop_core::scenario::{run_scenario, Scenario};
use teleop_core::ArmSide;

fn main() {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("teleop-episode.jsonl"));

    let mut s = Scenario::new(4000);
    s.pedals = Some(SimulatedPedalSource::new(parse_pedal_script("0 F\n1200 F+R\n2400 L\n3200 none\n").unwrap()).unwrap());
    s.orientation = (0..240u64)
        .map(|i| (i * 16, format!(r#"{{"roll":0,"pitch":0,"yaw":{},"seq":{}}}"#, i as f64 * 0.25, i + 1)))
        .collect();
    let kf = |t, j| LeaderKeyframe { t_ms: t, joints: [j, -j, 0.0, j / 2.0, 0.0], gripper: 0.3 };
    s.right = Some(SimulatedLeaderSource::new(ArmSide::Right, vec![kf(0, 0.0), kf(3000, 60.0)], 50.0).unwrap());

    let out = run_scenario(s, Some(&path)).unwrap();
    let footer = out.footer.expect("recording");
    println!("wrote {} ticks ({} ms) to {}", footer.ticks, footer.duration_ms, path.display());

    let ep = read_episode(&path).unwrap();
    let replayed = replay(&path).unwrap();
    println!("recorded final pose {:?}", ep.recorded_final_state().pose);
    println!("replayed final pose {:?}", replayed.pose);
    println!("bit-exact: {}", replayed == out.final_state);
}
