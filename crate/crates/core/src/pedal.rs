// SPDX-License-Identifier: Apache-2.0

//! Foot-pedal controller: wire frames, debouncing, velocity mapping.
//!
//! Wire frame (3 bytes): `0xA5, bitmask, 0xA5 ^ bitmask`. Bitmask bit 0 is
//! forward, bit 1 backward, bit 2 left, bit 3 right; bits 4-7 must be zero.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::framing::{FrameDecoder, FrameError, FrameLayout};
use crate::model::{pedal_bits, BaseVelocity, PedalState};

pub const PEDAL_HEADER: u8 = 0xA5;
pub const PEDAL_FRAME_LEN: usize = 3;
pub const PEDAL_LAYOUT: FrameLayout = FrameLayout {
    header: PEDAL_HEADER,
    len: PEDAL_FRAME_LEN,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PedalError {
    #[error("invalid pedal config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PedalFrame {
    pub bitmask: u8,
}

impl PedalFrame {
    pub fn new(bitmask: u8) -> Self {
        PedalFrame {
            bitmask: bitmask & pedal_bits::ALL,
        }
    }

    pub fn state(&self, timestamp_ms: u64) -> PedalState {
        PedalState::from_bits(self.bitmask, timestamp_ms)
    }
}

pub fn encode_pedal_frame(frame: PedalFrame) -> [u8; PEDAL_FRAME_LEN] {
    let bits = frame.bitmask & pedal_bits::ALL;
    [PEDAL_HEADER, bits, PEDAL_HEADER ^ bits]
}

pub fn decode_pedal_frame(bytes: &[u8]) -> Result<PedalFrame, FrameError> {
    let frame = PEDAL_LAYOUT.check(bytes)?;
    let bitmask = frame[1];
    if bitmask & !pedal_bits::ALL != 0 {
        return Err(FrameError::Invalid("reserved pedal bits set"));
    }
    Ok(PedalFrame { bitmask })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PedalConfig {
    /// Translation speed for a single pedal, m/s.
    pub v_lin: f64,
    /// Rotation speed for forward+side combinations, rad/s.
    pub omega_turn: f64,
    pub debounce_ms: u64,
}

impl Default for PedalConfig {
    fn default() -> Self {
        PedalConfig {
            v_lin: 0.2,
            omega_turn: 0.8,
            debounce_ms: 20,
        }
    }
}

impl PedalConfig {
    pub fn validate(&self) -> Result<(), PedalError> {
        if !(self.v_lin.is_finite() && self.v_lin > 0.0) {
            return Err(PedalError::InvalidConfig("v_lin must be positive"));
        }
        if !(self.omega_turn.is_finite() && self.omega_turn > 0.0) {
            return Err(PedalError::InvalidConfig("omega_turn must be positive"));
        }
        Ok(())
    }
}

/// Maps a pedal combination to a base velocity.
///
/// Single pedals translate; forward+left turns counterclockwise and
/// forward+right clockwise. Everything else stops the base.
pub fn pedals_to_velocity(state: &PedalState, cfg: &PedalConfig) -> BaseVelocity {
    use pedal_bits::*;
    let v = cfg.v_lin;
    let w = cfg.omega_turn;
    match state.bits() {
        0 => BaseVelocity::ZERO,
        FORWARD => BaseVelocity::new(v, 0.0, 0.0),
        BACKWARD => BaseVelocity::new(-v, 0.0, 0.0),
        LEFT => BaseVelocity::new(0.0, v, 0.0),
        RIGHT => BaseVelocity::new(0.0, -v, 0.0),
        b if b == FORWARD | LEFT => BaseVelocity::new(0.0, 0.0, w),
        b if b == FORWARD | RIGHT => BaseVelocity::new(0.0, 0.0, -w),
        _ => BaseVelocity::ZERO,
    }
}

/// Level-hold debouncer.
///
/// Between samples the raw level is assumed to hold (the controller
/// reports the current level in every frame). A new level is accepted once
/// it has held for at least `debounce_ms`; the accepted state is stamped
/// with the instant the hold requirement was met.
#[derive(Debug, Clone)]
pub struct Debouncer {
    debounce_ms: u64,
    accepted: PedalState,
    candidate: Option<(u8, u64)>,
    last_t: u64,
}

impl Debouncer {
    pub fn new(debounce_ms: u64, initial: PedalState) -> Self {
        Debouncer {
            debounce_ms,
            accepted: initial,
            candidate: None,
            last_t: initial.timestamp_ms,
        }
    }

    pub fn state(&self) -> PedalState {
        self.accepted
    }

    pub fn set_debounce_ms(&mut self, ms: u64) {
        self.debounce_ms = ms;
    }

    /// Accepts a pending level if it has held through `now_ms`.
    pub fn advance(&mut self, now_ms: u64) -> Option<PedalState> {
        let now = now_ms.max(self.last_t);
        self.last_t = now;
        let (bits, since) = self.candidate?;
        if now - since >= self.debounce_ms {
            self.candidate = None;
            self.accepted = PedalState::from_bits(bits, since + self.debounce_ms);
            return Some(self.accepted);
        }
        None
    }

    /// Records a raw level observed at `t_ms`.
    pub fn feed(&mut self, t_ms: u64, bits: u8) -> Option<PedalState> {
        let mut changed = self.advance(t_ms);
        let t = self.last_t;
        if bits == self.accepted.bits() {
            self.candidate = None;
        } else if !matches!(self.candidate, Some((b, _)) if b == bits) {
            self.candidate = Some((bits, t));
            if let Some(s) = self.advance(t) {
                changed = Some(s);
            }
        }
        changed
    }
}

/// Runs a timestamped frame sequence through a fresh debouncer and returns
/// every accepted transition.
pub fn debounce(
    frames: impl IntoIterator<Item = (u64, PedalFrame)>,
    cfg: &PedalConfig,
) -> Vec<PedalState> {
    let mut d = Debouncer::new(cfg.debounce_ms, PedalState::default());
    frames
        .into_iter()
        .filter_map(|(t, f)| d.feed(t, f.bitmask))
        .collect()
}

/// Result of pushing bytes through a [`PedalLink`].
#[derive(Debug, Default)]
pub struct LinkUpdate {
    pub frames: usize,
    pub accepted: Option<PedalState>,
    pub errors: Vec<FrameError>,
}

/// Decoder and debouncer for one pedal connection.
#[derive(Debug, Clone)]
pub struct PedalLink {
    decoder: FrameDecoder,
    debouncer: Debouncer,
}

impl PedalLink {
    pub fn new(cfg: &PedalConfig) -> Self {
        PedalLink {
            decoder: FrameDecoder::new(PEDAL_LAYOUT),
            debouncer: Debouncer::new(cfg.debounce_ms, PedalState::default()),
        }
    }

    pub fn state(&self) -> PedalState {
        self.debouncer.state()
    }

    pub fn decoder(&self) -> &FrameDecoder {
        &self.decoder
    }

    pub fn set_debounce_ms(&mut self, ms: u64) {
        self.debouncer.set_debounce_ms(ms);
    }

    pub fn receive(&mut self, now_ms: u64, bytes: &[u8]) -> LinkUpdate {
        let mut update = LinkUpdate::default();
        for item in self.decoder.push(bytes) {
            match item.and_then(|raw| decode_pedal_frame(&raw)) {
                Ok(frame) => {
                    update.frames += 1;
                    if let Some(s) = self.debouncer.feed(now_ms, frame.bitmask) {
                        update.accepted = Some(s);
                    }
                }
                Err(e) => update.errors.push(e),
            }
        }
        if let Some(s) = self.debouncer.advance(now_ms) {
            update.accepted = Some(s);
        }
        update
    }
}
