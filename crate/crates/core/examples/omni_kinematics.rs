// SPDX-License-Identifier: Apache-2.0

//! Wheel speeds for a few body twists on the default three-wheel base.

use teleop_core::sim::{BaseGeometry, OmniBase};
use teleop_core::BaseVelocity;

fn main() {
    let base = OmniBase::new(BaseGeometry::default()).unwrap();
    let g = base.geometry();
    println!("r={} m  R={} m  wheels at {:?} deg", g.wheel_radius, g.wheel_offset, g.wheel_angles_deg);
    for v in [
        BaseVelocity::new(0.3, 0.0, 0.0),
        BaseVelocity::new(0.0, 0.3, 0.0),
        BaseVelocity::new(0.0, 0.0, 1.0),
        BaseVelocity::new(0.2, -0.1, 0.5),
    ] {
        let w = base.ik(&v);
        let back = base.fk(&w);
        println!(
            "({:+.2}, {:+.2}, {:+.2}) -> wheels {:?} rad/s -> ({:+.3}, {:+.3}, {:+.3})",
            v.vx,
            v.vy,
            v.omega,
            w.as_array().map(|x| (x * 1000.0).round() / 1000.0),
            back.vx,
            back.vy,
            back.omega
        );
    }
}
