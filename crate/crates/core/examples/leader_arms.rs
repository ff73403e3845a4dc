// SPDX-License-Identifier: Apache-2.0

//! Leader frames in, rate-limited follower targets out.

use teleop_core::arm::{encode_leader_frame, map_leader_to_follower, rate_limit, ArmCalibration, LeaderLink};
use teleop_core::{ArmJointVector, ArmSide};

fn main() {
    let mut leader = ArmJointVector::neutral(ArmSide::Left);
    leader.joints = [40.0, -15.0, 170.0, 0.0, 5.0];
    leader.gripper = 0.8;

    let frame = encode_leader_frame(&leader);
    println!("frame: {}", frame.iter().map(|b| format!("{b:02X}")).collect::<Vec<_>>().join(" "));

    let mut link = LeaderLink::new();
    let decoded = link.receive(&frame).remove(0).unwrap();
    let cal = ArmCalibration::default();
    let target = map_leader_to_follower(&decoded, &cal);
    println!("decoded {:?}\nclamped target {:?}", decoded.joints, target.joints);

    let mut follower = ArmJointVector::neutral(ArmSide::Left);
    for tick in 1..=6 {
        follower = rate_limit(&follower, &target, 10.0).unwrap();
        println!("tick {tick}: {:?} grip {:.2}", follower.joints, follower.gripper);
    }
}
