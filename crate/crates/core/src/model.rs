// SPDX-License-Identifier: Apache-2.0

//! Shared domain types and angle arithmetic.
//!
//! Angles are degrees at every module boundary; radians only appear inside
//! the kinematics math. Timestamps are monotonic milliseconds since process
//! start (see [`crate::clock`]).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of actuated joints on each follower arm.
pub const ARM_JOINTS: usize = 5;

/// Largest head deflection the robot accepts, in degrees.
pub const HEAD_LIMIT_DEG: f64 = 90.0;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid angle {0}: must be finite")]
    InvalidAngle(f64),
    #[error("invalid range [{lo}, {hi}]")]
    InvalidRange { lo: f64, hi: f64 },
}

/// Wraps an angle into the half-open interval (-180, 180].
pub fn wrap180(angle: f64) -> Result<f64, ModelError> {
    if !angle.is_finite() {
        return Err(ModelError::InvalidAngle(angle));
    }
    Ok(wrap180_finite(angle))
}

/// Infallible variant for values already known to be finite.
pub(crate) fn wrap180_finite(angle: f64) -> f64 {
    // In-range values pass through untouched; the shift below can move them by an ulp.
    if angle > -180.0 && angle <= 180.0 {
        return angle;
    }
    // rem_euclid lands in [0, 360); shift so 180 maps to itself and -180 to 180.
    let r = (angle + 180.0).rem_euclid(360.0) - 180.0;
    if r <= -180.0 {
        r + 360.0
    } else {
        r
    }
}

pub fn clamp(value: f64, lo: f64, hi: f64) -> Result<f64, ModelError> {
    if lo > hi || lo.is_nan() || hi.is_nan() {
        return Err(ModelError::InvalidRange { lo, hi });
    }
    Ok(hi.min(lo.max(value)))
}

/// Raw phone attitude as received from the operator client.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientationSample {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub timestamp_ms: u64,
    pub seq: u64,
}

/// Zero point captured from an [`OrientationSample`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReference {
    pub roll0: f64,
    pub pitch0: f64,
    pub yaw0: f64,
    pub established_at_ms: u64,
}

/// Two-axis head target, each field within ±[`HEAD_LIMIT_DEG`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HeadCommand {
    pub yaw: f64,
    pub roll: f64,
}

impl HeadCommand {
    pub const ZERO: HeadCommand = HeadCommand { yaw: 0.0, roll: 0.0 };

    /// Builds a command with both axes clamped into the head's range.
    pub fn clamped(yaw: f64, roll: f64) -> Self {
        HeadCommand {
            yaw: yaw.clamp(-HEAD_LIMIT_DEG, HEAD_LIMIT_DEG),
            roll: roll.clamp(-HEAD_LIMIT_DEG, HEAD_LIMIT_DEG),
        }
    }
}

/// Bit layout shared by [`PedalState`] and the pedal wire frame.
pub mod pedal_bits {
    pub const FORWARD: u8 = 0x01;
    pub const BACKWARD: u8 = 0x02;
    pub const LEFT: u8 = 0x04;
    pub const RIGHT: u8 = 0x08;
    pub const ALL: u8 = FORWARD | BACKWARD | LEFT | RIGHT;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PedalState {
    pub forward: bool,
    pub backward: bool,
    pub left: bool,
    pub right: bool,
    pub timestamp_ms: u64,
}

impl PedalState {
    /// Decodes the low nibble of a pedal bitmask; reserved bits are ignored.
    pub fn from_bits(bits: u8, timestamp_ms: u64) -> Self {
        PedalState {
            forward: bits & pedal_bits::FORWARD != 0,
            backward: bits & pedal_bits::BACKWARD != 0,
            left: bits & pedal_bits::LEFT != 0,
            right: bits & pedal_bits::RIGHT != 0,
            timestamp_ms,
        }
    }

    pub fn bits(&self) -> u8 {
        let mut b = 0;
        if self.forward {
            b |= pedal_bits::FORWARD;
        }
        if self.backward {
            b |= pedal_bits::BACKWARD;
        }
        if self.left {
            b |= pedal_bits::LEFT;
        }
        if self.right {
            b |= pedal_bits::RIGHT;
        }
        b
    }
}

/// Body-frame base velocity: +vx forward, +vy left, +omega counterclockwise.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BaseVelocity {
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl BaseVelocity {
    pub const ZERO: BaseVelocity = BaseVelocity {
        vx: 0.0,
        vy: 0.0,
        omega: 0.0,
    };

    pub fn new(vx: f64, vy: f64, omega: f64) -> Self {
        BaseVelocity { vx, vy, omega }
    }

    pub fn is_zero(&self) -> bool {
        self.vx == 0.0 && self.vy == 0.0 && self.omega == 0.0
    }

    /// Saturates each component independently.
    pub fn limited(&self, v_max: f64, omega_max: f64) -> Self {
        BaseVelocity {
            vx: self.vx.clamp(-v_max, v_max),
            vy: self.vy.clamp(-v_max, v_max),
            omega: self.omega.clamp(-omega_max, omega_max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmSide {
    Left,
    Right,
}

impl ArmSide {
    pub fn wire_byte(self) -> u8 {
        match self {
            ArmSide::Left => 0,
            ArmSide::Right => 1,
        }
    }

    pub fn from_wire_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(ArmSide::Left),
            1 => Some(ArmSide::Right),
            _ => None,
        }
    }
}

/// Joint-space arm pose: five joints in degrees plus a normalized gripper.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmJointVector {
    pub side: ArmSide,
    pub joints: [f64; ARM_JOINTS],
    pub gripper: f64,
}

impl ArmJointVector {
    pub fn neutral(side: ArmSide) -> Self {
        ArmJointVector {
            side,
            joints: [0.0; ARM_JOINTS],
            gripper: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SafetyState {
    #[default]
    Nominal,
    BaseHalted,
    Frozen,
}

/// The fused command produced once per control tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnifiedCommand {
    pub tick: u64,
    pub timestamp_ms: u64,
    pub base: BaseVelocity,
    pub head: HeadCommand,
    pub left_arm: ArmJointVector,
    pub right_arm: ArmJointVector,
    pub safety: SafetyState,
}

impl UnifiedCommand {
    /// Tick-zero command: robot at rest, head centered, arms neutral.
    pub fn initial() -> Self {
        UnifiedCommand {
            tick: 0,
            timestamp_ms: 0,
            base: BaseVelocity::ZERO,
            head: HeadCommand::ZERO,
            left_arm: ArmJointVector::neutral(ArmSide::Left),
            right_arm: ArmJointVector::neutral(ArmSide::Right),
            safety: SafetyState::Nominal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Head,
    Pedals,
    LeftLeader,
    RightLeader,
    Client,
}

impl Modality {
    pub const ALL: [Modality; 5] = [
        Modality::Head,
        Modality::Pedals,
        Modality::LeftLeader,
        Modality::RightLeader,
        Modality::Client,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalityStatus {
    pub modality: Modality,
    pub connected: bool,
    /// `None` until the first message arrives.
    pub last_seen_ms: Option<u64>,
    pub stale: bool,
}

impl ModalityStatus {
    /// Evaluates staleness; a modality never seen counts as stale.
    pub fn evaluate(
        modality: Modality,
        connected: bool,
        last_seen_ms: Option<u64>,
        now_ms: u64,
        threshold_ms: u64,
    ) -> Self {
        let stale = match last_seen_ms {
            Some(t) => now_ms.saturating_sub(t) > threshold_ms,
            None => true,
        };
        ModalityStatus {
            modality,
            connected,
            last_seen_ms,
            stale,
        }
    }
}
