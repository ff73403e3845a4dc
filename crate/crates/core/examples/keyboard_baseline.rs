// SPDX-License-Identifier: Apache-2.0

//! Step-based keyboard control in the simulator.

use teleop_core::scenario::{run_scenario, Scenario};

fn main() {
    let mut s = Scenario::new(4000);
    s.keys = vec![(0, 'w'), (600, 'w'), (1200, 'a'), (1800, 'q'), (2400, 'l'), (2500, 'l'), (2600, 'i')];
    let k = s.keyboard.keys;
    println!("keys: {k:?}");
    let out = run_scenario(s, None).unwrap();
    let st = out.final_state;
    println!(
        "after {} commands: pose ({:.3}, {:.3}, {:.1} deg), head yaw {:.1} roll {:.1}",
        out.commands.len(),
        st.pose.x,
        st.pose.y,
        st.pose.heading,
        st.head.yaw,
        st.head.roll
    );
}
