// SPDX-License-Identifier: Apache-2.0

//! Kinematic model of the mobile bimanual platform.
//!
//! The base is a three-wheel omnidirectional drive. Wheel `i`, mounted at
//! angle θᵢ around the chassis at radius `R`, spins at
//!
//! ```text
//! wᵢ = (−sin θᵢ · vx + cos θᵢ · vy + R · ω) / r
//! ```
//!
//! Forward kinematics inverts that 3×3 map. Pose integration is explicit
//! Euler in the world frame; head and arm joints slew toward their targets
//! at bounded speed. There is no dynamics model.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    wrap180_finite, ArmJointVector, ArmSide, BaseVelocity, HeadCommand, UnifiedCommand,
    ARM_JOINTS, HEAD_LIMIT_DEG,
};
use crate::video::{FrameOrientation, VideoFrame};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("degenerate base geometry: {0}")]
    DegenerateGeometry(String),
    #[error("invalid step dt {0} s: must lie in (0, 0.1]")]
    InvalidStep(f64),
    #[error("invalid frame size {0}x{1}")]
    InvalidFrameSize(u32, u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaseGeometry {
    /// Wheel radius, m.
    pub wheel_radius: f64,
    /// Distance from chassis center to each wheel, m.
    pub wheel_offset: f64,
    /// Mounting angles measured counterclockwise from robot-forward, degrees.
    pub wheel_angles_deg: [f64; 3],
}

impl Default for BaseGeometry {
    fn default() -> Self {
        BaseGeometry {
            wheel_radius: 0.05,
            wheel_offset: 0.15,
            wheel_angles_deg: [90.0, 210.0, 330.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WheelSpeeds {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

impl WheelSpeeds {
    pub fn as_array(&self) -> [f64; 3] {
        [self.w1, self.w2, self.w3]
    }
}

/// Validated geometry with its kinematic matrix and inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct OmniBase {
    geometry: BaseGeometry,
    forward: Matrix3<f64>,
    inverse: Matrix3<f64>,
}

impl OmniBase {
    pub fn new(geometry: BaseGeometry) -> Result<Self, SimError> {
        let BaseGeometry {
            wheel_radius: r,
            wheel_offset: big_r,
            wheel_angles_deg: angles,
        } = geometry;
        if !(r.is_finite() && r > 0.0) {
            return Err(SimError::DegenerateGeometry("wheel radius must be positive".into()));
        }
        if !(big_r.is_finite() && big_r > 0.0) {
            return Err(SimError::DegenerateGeometry("wheel offset must be positive".into()));
        }
        for i in 0..3 {
            for j in i + 1..3 {
                if wrap180_finite(angles[i] - angles[j]).abs() < 1e-9 {
                    return Err(SimError::DegenerateGeometry(format!(
                        "wheels {} and {} share mounting angle {}",
                        i + 1,
                        j + 1,
                        angles[i]
                    )));
                }
            }
        }
        let mut m = Matrix3::zeros();
        for (i, a) in angles.iter().enumerate() {
            let t = a.to_radians();
            m[(i, 0)] = -t.sin();
            m[(i, 1)] = t.cos();
            m[(i, 2)] = big_r;
        }
        // det is in m·(unitless)²; compare against the offset scale.
        if m.determinant().abs() < 1e-9 * big_r {
            return Err(SimError::DegenerateGeometry(
                "wheel angles give a singular kinematic matrix".into(),
            ));
        }
        let inverse = m
            .try_inverse()
            .ok_or_else(|| SimError::DegenerateGeometry("kinematic matrix not invertible".into()))?;
        Ok(OmniBase {
            geometry,
            forward: m,
            inverse,
        })
    }

    pub fn geometry(&self) -> &BaseGeometry {
        &self.geometry
    }

    pub fn ik(&self, v: &BaseVelocity) -> WheelSpeeds {
        let w = self.forward * Vector3::new(v.vx, v.vy, v.omega) / self.geometry.wheel_radius;
        WheelSpeeds {
            w1: w[0],
            w2: w[1],
            w3: w[2],
        }
    }

    pub fn fk(&self, w: &WheelSpeeds) -> BaseVelocity {
        let v = self.inverse * Vector3::new(w.w1, w.w2, w.w3) * self.geometry.wheel_radius;
        BaseVelocity::new(v[0], v[1], v[2])
    }
}

pub fn base_ik(v: &BaseVelocity, base: &OmniBase) -> WheelSpeeds {
    base.ik(v)
}

pub fn base_fk(w: &WheelSpeeds, base: &OmniBase) -> BaseVelocity {
    base.fk(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    /// Degrees, wrapped to (−180, 180].
    pub heading: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub pose: Pose2,
    pub head: HeadCommand,
    pub left_arm: ArmJointVector,
    pub right_arm: ArmJointVector,
    pub wheels: WheelSpeeds,
    pub sim_time_ms: f64,
}

impl Default for RobotState {
    fn default() -> Self {
        RobotState {
            pose: Pose2::default(),
            head: HeadCommand::ZERO,
            left_arm: ArmJointVector::neutral(ArmSide::Left),
            right_arm: ArmJointVector::neutral(ArmSide::Right),
            wheels: WheelSpeeds::default(),
            sim_time_ms: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub geometry: BaseGeometry,
    pub v_max: f64,
    pub omega_max: f64,
    pub head_speed_deg_s: f64,
    pub arm_speed_deg_s: f64,
    /// Gripper slew, normalized opening per second.
    pub gripper_speed_per_s: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            geometry: BaseGeometry::default(),
            v_max: 1.0,
            omega_max: 3.0,
            head_speed_deg_s: 240.0,
            arm_speed_deg_s: 240.0,
            gripper_speed_per_s: 2.0,
        }
    }
}

pub const MAX_STEP_DT: f64 = 0.1;

fn slew(from: f64, to: f64, max_delta: f64) -> f64 {
    from + (to - from).clamp(-max_delta, max_delta)
}

fn slew_arm(cur: &ArmJointVector, target: &ArmJointVector, joint_step: f64, grip_step: f64) -> ArmJointVector {
    let joints: [f64; ARM_JOINTS] = std::array::from_fn(|i| slew(cur.joints[i], target.joints[i], joint_step));
    ArmJointVector {
        side: cur.side,
        joints,
        gripper: slew(cur.gripper, target.gripper, grip_step).clamp(0.0, 1.0),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulator {
    config: SimConfig,
    base: OmniBase,
}

impl Simulator {
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        Ok(Simulator {
            base: OmniBase::new(config.geometry)?,
            config,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn base(&self) -> &OmniBase {
        &self.base
    }

    /// Advances the robot by `dt` seconds under `cmd`.
    pub fn step(&self, state: &RobotState, cmd: &UnifiedCommand, dt: f64) -> Result<RobotState, SimError> {
        if !(dt > 0.0 && dt <= MAX_STEP_DT) {
            return Err(SimError::InvalidStep(dt));
        }
        let c = &self.config;
        let v = cmd.base.limited(c.v_max, c.omega_max);

        let phi = state.pose.heading.to_radians();
        let (s, co) = phi.sin_cos();
        let pose = Pose2 {
            x: state.pose.x + dt * (v.vx * co - v.vy * s),
            y: state.pose.y + dt * (v.vx * s + v.vy * co),
            heading: wrap180_finite(state.pose.heading + (dt * v.omega).to_degrees()),
        };

        let head_step = c.head_speed_deg_s * dt;
        let target_head = HeadCommand::clamped(cmd.head.yaw, cmd.head.roll);
        let head = HeadCommand {
            yaw: slew(state.head.yaw, target_head.yaw, head_step).clamp(-HEAD_LIMIT_DEG, HEAD_LIMIT_DEG),
            roll: slew(state.head.roll, target_head.roll, head_step)
                .clamp(-HEAD_LIMIT_DEG, HEAD_LIMIT_DEG),
        };

        let joint_step = c.arm_speed_deg_s * dt;
        let grip_step = c.gripper_speed_per_s * dt;
        Ok(RobotState {
            pose,
            head,
            left_arm: slew_arm(&state.left_arm, &cmd.left_arm, joint_step, grip_step),
            right_arm: slew_arm(&state.right_arm, &cmd.right_arm, joint_step, grip_step),
            wheels: self.base.ik(&v),
            sim_time_ms: state.sim_time_ms + dt * 1000.0,
        })
    }
}

/// Crosshair displacement per degree of head deflection, px/°.
pub const CROSSHAIR_GAIN_PX_PER_DEG: f64 = 2.0;
/// Background grid pitch, px.
pub const GRID_SPACING_PX: i64 = 40;
/// Background shift per metre of base travel, px/m.
pub const GRID_PX_PER_M: f64 = 200.0;
/// Background shift per degree of base heading, px/°.
pub const GRID_PX_PER_DEG: f64 = 4.0;
pub const CROSSHAIR_HALF_LEN_PX: i64 = 8;

pub const BACKGROUND_RGB: [u8; 3] = [24, 28, 32];
pub const GRID_RGB: [u8; 3] = [90, 96, 104];
pub const CROSSHAIR_RGB: [u8; 3] = [255, 40, 40];

/// Pixel position of the crosshair center for a head pose.
pub fn crosshair_position(head: &HeadCommand, width: u32, height: u32) -> (i64, i64) {
    let cx = (width / 2) as i64 + (CROSSHAIR_GAIN_PX_PER_DEG * head.yaw).round() as i64;
    let cy = (height / 2) as i64 + (CROSSHAIR_GAIN_PX_PER_DEG * head.roll).round() as i64;
    (cx, cy)
}

/// Deterministic stand-in for the head camera.
///
/// A grid whose phase follows the base pose (forward travel scrolls it
/// vertically, lateral travel and heading scroll it horizontally) plus a
/// crosshair offset from the frame center by the head angles. 24-bit RGB,
/// row-major, top-left origin. Frames taller than wide are tagged portrait.
pub fn render_synthetic_frame(
    state: &RobotState,
    width: u32,
    height: u32,
) -> Result<VideoFrame, SimError> {
    if width == 0 || height == 0 {
        return Err(SimError::InvalidFrameSize(width, height));
    }
    let ox = (-state.pose.y * GRID_PX_PER_M - state.pose.heading * GRID_PX_PER_DEG).round() as i64;
    let oy = (state.pose.x * GRID_PX_PER_M).round() as i64;
    let (cx, cy) = crosshair_position(&state.head, width, height);

    let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
    for py in 0..height as i64 {
        let row_on_grid = (py + oy).rem_euclid(GRID_SPACING_PX) == 0;
        for px in 0..width as i64 {
            let on_cross = (py == cy && (px - cx).abs() <= CROSSHAIR_HALF_LEN_PX)
                || (px == cx && (py - cy).abs() <= CROSSHAIR_HALF_LEN_PX);
            let rgb = if on_cross {
                CROSSHAIR_RGB
            } else if row_on_grid || (px + ox).rem_euclid(GRID_SPACING_PX) == 0 {
                GRID_RGB
            } else {
                BACKGROUND_RGB
            };
            pixels.extend_from_slice(&rgb);
        }
    }
    let orientation = if height > width {
        FrameOrientation::Portrait
    } else {
        FrameOrientation::Landscape
    };
    Ok(VideoFrame::new(width, height, pixels, orientation, state.sim_time_ms as u64)
        .expect("buffer sized from dimensions"))
}
