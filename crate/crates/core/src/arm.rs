// SPDX-License-Identifier: Apache-2.0

//! Leader-arm joint frames and the leader-to-follower mapping.
//!
//! Wire frame (14 bytes, little-endian):
//!
//! ```text
//! 0      header 0x5A
//! 1      side (0 = left, 1 = right)
//! 2..12  five i16 joint angles in centidegrees
//! 12     gripper opening, 0..=255
//! 13     XOR of bytes 0..13
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::framing::{FrameDecoder, FrameError, FrameLayout};
use crate::model::{ArmJointVector, ArmSide, ARM_JOINTS};

pub const LEADER_HEADER: u8 = 0x5A;
pub const LEADER_FRAME_LEN: usize = 14;
pub const LEADER_LAYOUT: FrameLayout = FrameLayout {
    header: LEADER_HEADER,
    len: LEADER_FRAME_LEN,
};

/// Joint travel treated as equivalent to a full gripper stroke when rate
/// limiting the normalized gripper channel.
pub const GRIPPER_STROKE_DEG: f64 = 100.0;

pub const DEFAULT_MAX_STEP_DEG: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ArmError {
    #[error("cannot rate-limit a {previous:?} arm toward a {target:?} target")]
    InvalidPairing { previous: ArmSide, target: ArmSide },
    #[error("invalid arm calibration: {0}")]
    InvalidCalibration(String),
}

pub fn encode_leader_frame(arm: &ArmJointVector) -> [u8; LEADER_FRAME_LEN] {
    let mut body = Vec::with_capacity(LEADER_FRAME_LEN);
    body.push(LEADER_HEADER);
    body.push(arm.side.wire_byte());
    for j in arm.joints {
        let centi = (j * 100.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        body.extend_from_slice(&centi.to_le_bytes());
    }
    body.push((arm.gripper.clamp(0.0, 1.0) * 255.0).round() as u8);
    LEADER_LAYOUT.seal(&mut body);
    body.try_into().expect("leader frame length")
}

pub fn decode_leader_frame(bytes: &[u8]) -> Result<ArmJointVector, FrameError> {
    let frame = LEADER_LAYOUT.check(bytes)?;
    let side = ArmSide::from_wire_byte(frame[1]).ok_or(FrameError::Invalid("unknown arm side"))?;
    let mut joints = [0.0; ARM_JOINTS];
    for (i, j) in joints.iter_mut().enumerate() {
        let at = 2 + 2 * i;
        *j = i16::from_le_bytes([frame[at], frame[at + 1]]) as f64 / 100.0;
    }
    Ok(ArmJointVector {
        side,
        joints,
        gripper: frame[12] as f64 / 255.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimit {
    pub min: f64,
    pub max: f64,
}

/// Per-joint correction from leader to follower conventions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArmCalibration {
    pub offset: [f64; ARM_JOINTS],
    /// +1 or -1 per joint.
    pub sign: [i8; ARM_JOINTS],
    pub limits: [JointLimit; ARM_JOINTS],
}

impl Default for ArmCalibration {
    fn default() -> Self {
        ArmCalibration {
            offset: [0.0; ARM_JOINTS],
            sign: [1; ARM_JOINTS],
            limits: [JointLimit {
                min: -150.0,
                max: 150.0,
            }; ARM_JOINTS],
        }
    }
}

impl ArmCalibration {
    pub fn validate(&self) -> Result<(), ArmError> {
        for (i, l) in self.limits.iter().enumerate() {
            // Written this way round so NaN limits fail too.
            if l.min.partial_cmp(&l.max) != Some(std::cmp::Ordering::Less) {
                return Err(ArmError::InvalidCalibration(format!(
                    "joint {} limit min {} must be below max {}",
                    i + 1,
                    l.min,
                    l.max
                )));
            }
        }
        if let Some(i) = self.sign.iter().position(|s| *s != 1 && *s != -1) {
            return Err(ArmError::InvalidCalibration(format!(
                "joint {} sign must be +1 or -1",
                i + 1
            )));
        }
        Ok(())
    }

    pub fn clamp_joints(&self, joints: &mut [f64; ARM_JOINTS]) {
        for (j, l) in joints.iter_mut().zip(&self.limits) {
            *j = j.clamp(l.min, l.max);
        }
    }
}

pub fn map_leader_to_follower(leader: &ArmJointVector, cal: &ArmCalibration) -> ArmJointVector {
    let mut joints: [f64; ARM_JOINTS] = std::array::from_fn(|i| cal.sign[i] as f64 * leader.joints[i] + cal.offset[i]);
    cal.clamp_joints(&mut joints);
    ArmJointVector {
        side: leader.side,
        joints,
        gripper: leader.gripper.clamp(0.0, 1.0),
    }
}

fn step_toward(from: f64, to: f64, max_step: f64) -> f64 {
    from + (to - from).clamp(-max_step, max_step)
}

/// Moves `previous` toward `target` by at most `max_step` degrees per joint.
pub fn rate_limit(
    previous: &ArmJointVector,
    target: &ArmJointVector,
    max_step: f64,
) -> Result<ArmJointVector, ArmError> {
    if previous.side != target.side {
        return Err(ArmError::InvalidPairing {
            previous: previous.side,
            target: target.side,
        });
    }
    let mut joints = previous.joints;
    for (j, t) in joints.iter_mut().zip(target.joints) {
        *j = step_toward(*j, t, max_step);
    }
    Ok(ArmJointVector {
        side: previous.side,
        joints,
        gripper: step_toward(previous.gripper, target.gripper, max_step / GRIPPER_STROKE_DEG),
    })
}

/// Streaming decoder for one leader connection.
#[derive(Debug, Clone)]
pub struct LeaderLink {
    decoder: FrameDecoder,
}

impl Default for LeaderLink {
    fn default() -> Self {
        LeaderLink {
            decoder: FrameDecoder::new(LEADER_LAYOUT),
        }
    }
}

impl LeaderLink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn decoder(&self) -> &FrameDecoder {
        &self.decoder
    }

    pub fn receive(&mut self, bytes: &[u8]) -> Vec<Result<ArmJointVector, FrameError>> {
        self.decoder
            .push(bytes)
            .into_iter()
            .map(|r| r.and_then(|raw| decode_leader_frame(&raw)))
            .collect()
    }
}
