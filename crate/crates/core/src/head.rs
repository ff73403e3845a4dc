// SPDX-License-Identifier: Apache-2.0

//! Smartphone orientation to 2-DOF head commands.
//!
//! A [`HeadSession`] owns the calibration reference for one operator
//! connection. The first sample after connect (or after
//! [`HeadSession::request_recalibration`]) becomes the zero point; every
//! later sample is expressed relative to it and clamped to ±90°.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    wrap180, CalibrationReference, HeadCommand, ModelError, OrientationSample, HEAD_LIMIT_DEG,
};

#[derive(Debug, Error)]
pub enum HeadError {
    #[error("malformed orientation message: {0}")]
    Malformed(String),
    #[error("invalid head control config: {0}")]
    InvalidConfig(&'static str),
}

impl From<ModelError> for HeadError {
    fn from(e: ModelError) -> Self {
        HeadError::Malformed(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YawSource {
    #[default]
    PhoneYaw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RollSource {
    #[default]
    PhoneRoll,
    PhonePitch,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadControlConfig {
    pub yaw_source: YawSource,
    pub roll_source: RollSource,
    pub invert_yaw: bool,
    pub invert_roll: bool,
    /// Exponential smoothing factor in [0, 1); 0 disables smoothing.
    pub smoothing: f64,
}

impl HeadControlConfig {
    pub fn validate(&self) -> Result<(), HeadError> {
        if !(0.0..1.0).contains(&self.smoothing) {
            return Err(HeadError::InvalidConfig("smoothing must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct OrientationWire {
    roll: f64,
    pitch: f64,
    yaw: f64,
    seq: u64,
    #[serde(default)]
    #[allow(dead_code)]
    t: Option<f64>,
}

/// Parses one orientation record. The server clock, not the client's
/// optional `t`, stamps the sample.
pub fn parse_orientation_message(text: &str, now_ms: u64) -> Result<OrientationSample, HeadError> {
    let wire: OrientationWire =
        serde_json::from_str(text).map_err(|e| HeadError::Malformed(e.to_string()))?;
    Ok(OrientationSample {
        roll: wrap180(wire.roll)?,
        pitch: wrap180(wire.pitch)?,
        yaw: wrap180(wire.yaw)?,
        timestamp_ms: now_ms,
        seq: wire.seq,
    })
}

pub fn calibrate(sample: &OrientationSample) -> CalibrationReference {
    CalibrationReference {
        roll0: sample.roll,
        pitch0: sample.pitch,
        yaw0: sample.yaw,
        established_at_ms: sample.timestamp_ms,
    }
}

fn axis_delta(value: f64, zero: f64, invert: bool) -> f64 {
    let d = crate::model::wrap180_finite(value - zero).clamp(-HEAD_LIMIT_DEG, HEAD_LIMIT_DEG);
    if invert {
        -d
    } else {
        d
    }
}

/// Expresses `sample` relative to `reference` as a clamped head command.
pub fn normalize(
    sample: &OrientationSample,
    reference: &CalibrationReference,
    cfg: &HeadControlConfig,
) -> HeadCommand {
    let yaw = match cfg.yaw_source {
        YawSource::PhoneYaw => axis_delta(sample.yaw, reference.yaw0, cfg.invert_yaw),
    };
    let roll = match cfg.roll_source {
        RollSource::PhoneRoll => axis_delta(sample.roll, reference.roll0, cfg.invert_roll),
        RollSource::PhonePitch => axis_delta(sample.pitch, reference.pitch0, cfg.invert_roll),
    };
    HeadCommand { yaw, roll }
}

/// Per-connection normalization state.
#[derive(Debug, Clone)]
pub struct HeadSession {
    cfg: HeadControlConfig,
    reference: Option<CalibrationReference>,
    last_seq: Option<u64>,
    recalibrate_pending: bool,
    smoothed: Option<HeadCommand>,
}

impl HeadSession {
    pub fn new(cfg: HeadControlConfig) -> Self {
        HeadSession {
            cfg,
            reference: None,
            last_seq: None,
            recalibrate_pending: false,
            smoothed: None,
        }
    }

    pub fn reference(&self) -> Option<&CalibrationReference> {
        self.reference.as_ref()
    }

    /// The next accepted sample becomes the new zero reference.
    pub fn request_recalibration(&mut self) {
        self.recalibrate_pending = true;
    }

    /// Feeds one sample. Returns `None` when the sample is out of order.
    pub fn ingest(&mut self, sample: &OrientationSample) -> Option<HeadCommand> {
        if matches!(self.last_seq, Some(last) if sample.seq <= last) {
            return None;
        }
        self.last_seq = Some(sample.seq);

        if self.reference.is_none() || self.recalibrate_pending {
            self.reference = Some(calibrate(sample));
            self.recalibrate_pending = false;
            self.smoothed = None;
        }
        let reference = self.reference.as_ref()?;
        let raw = normalize(sample, reference, &self.cfg);

        let alpha = self.cfg.smoothing;
        let out = match self.smoothed {
            Some(prev) if alpha > 0.0 => HeadCommand::clamped(
                alpha * prev.yaw + (1.0 - alpha) * raw.yaw,
                alpha * prev.roll + (1.0 - alpha) * raw.roll,
            ),
            _ => raw,
        };
        self.smoothed = Some(out);
        Some(out)
    }

    /// Parses and ingests a wire message in one step.
    pub fn handle_message(
        &mut self,
        text: &str,
        now_ms: u64,
    ) -> Result<Option<HeadCommand>, HeadError> {
        let sample = parse_orientation_message(text, now_ms)?;
        Ok(self.ingest(&sample))
    }
}
