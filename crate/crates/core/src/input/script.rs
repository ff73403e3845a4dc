// SPDX-License-Identifier: Apache-2.0

//! Scripted, hardware-free pedal and leader-arm byte streams.
//!
//! Pedal script text format, one event per line (`#` starts a comment):
//!
//! ```text
//! # t_ms  pedals     [corrupt]
//! 0       F
//! 1500    F+L
//! 2200    none
//! 3000    R          corrupt
//! ```
//!
//! Pedal names are `F`, `B`, `L`, `R` joined with `+`, or `none`. A
//! `corrupt` event sends one frame with a broken checksum carrying those
//! pedals and leaves the scripted state unchanged. Between events the
//! current state is repeated as a keepalive frame at a fixed rate, so an
//! idle pedal board is distinguishable from a dead cable.

use std::io::Read;
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use crate::arm::encode_leader_frame;
use crate::clock::Clock;
use crate::fusion::Shutdown;
use crate::model::{pedal_bits, ArmJointVector, ArmSide, ARM_JOINTS};
use crate::pedal::{encode_pedal_frame, PedalFrame};

pub const KEEPALIVE_HZ: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScriptError {
    #[error("invalid script: event at {t_ms} ms comes after {prev_ms} ms")]
    Unordered { t_ms: u64, prev_ms: u64 },
    #[error("invalid script line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid script: {0}")]
    Invalid(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PedalEvent {
    pub t_ms: u64,
    pub bits: u8,
    pub corrupt: bool,
}

impl PedalEvent {
    pub fn press(t_ms: u64, bits: u8) -> Self {
        PedalEvent {
            t_ms,
            bits,
            corrupt: false,
        }
    }

    pub fn corrupt(t_ms: u64, bits: u8) -> Self {
        PedalEvent {
            t_ms,
            bits,
            corrupt: true,
        }
    }
}

pub fn parse_pedal_names(s: &str) -> Option<u8> {
    if s.eq_ignore_ascii_case("none") || s == "-" {
        return Some(0);
    }
    let mut bits = 0;
    for part in s.split('+') {
        bits |= match part.trim().to_ascii_uppercase().as_str() {
            "F" => pedal_bits::FORWARD,
            "B" => pedal_bits::BACKWARD,
            "L" => pedal_bits::LEFT,
            "R" => pedal_bits::RIGHT,
            _ => return None,
        };
    }
    Some(bits)
}

pub fn parse_pedal_script(text: &str) -> Result<Vec<PedalEvent>, ScriptError> {
    let mut events = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| ScriptError::Parse {
            line: i + 1,
            message,
        };
        let mut fields = line.split_whitespace();
        let t_ms = fields
            .next()
            .and_then(|t| t.parse::<u64>().ok())
            .ok_or_else(|| err("expected a millisecond timestamp".into()))?;
        let names = fields.next().ok_or_else(|| err("expected pedal names".into()))?;
        let bits = parse_pedal_names(names).ok_or_else(|| err(format!("unknown pedals {names:?}")))?;
        let corrupt = match fields.next() {
            None => false,
            Some("corrupt") => true,
            Some(other) => return Err(err(format!("unexpected {other:?}"))),
        };
        events.push(PedalEvent { t_ms, bits, corrupt });
    }
    Ok(events)
}

fn check_order(times: impl Iterator<Item = u64>) -> Result<(), ScriptError> {
    let mut prev = None;
    for t in times {
        if let Some(p) = prev {
            if t < p {
                return Err(ScriptError::Unordered { t_ms: t, prev_ms: p });
            }
        }
        prev = Some(t);
    }
    Ok(())
}

/// Generates the exact byte stream a pedal board would send for a script.
#[derive(Debug, Clone)]
pub struct SimulatedPedalSource {
    events: Vec<PedalEvent>,
    next_event: usize,
    keepalive_ms: f64,
    next_keepalive: u64,
    bits: u8,
}

impl SimulatedPedalSource {
    pub fn new(events: Vec<PedalEvent>) -> Result<Self, ScriptError> {
        Self::with_keepalive(events, KEEPALIVE_HZ)
    }

    pub fn with_keepalive(events: Vec<PedalEvent>, keepalive_hz: f64) -> Result<Self, ScriptError> {
        check_order(events.iter().map(|e| e.t_ms))?;
        if !(keepalive_hz.is_finite() && keepalive_hz > 0.0) {
            return Err(ScriptError::Invalid("keepalive rate must be positive"));
        }
        Ok(SimulatedPedalSource {
            events,
            next_event: 0,
            keepalive_ms: 1000.0 / keepalive_hz,
            next_keepalive: 0,
            bits: 0,
        })
    }

    fn keepalive_time(&self) -> u64 {
        (self.next_keepalive as f64 * self.keepalive_ms).round() as u64
    }

    /// Time of the next frame this source will emit.
    pub fn next_frame_at(&self) -> u64 {
        let k = self.keepalive_time();
        match self.events.get(self.next_event) {
            Some(e) if e.t_ms <= k => e.t_ms,
            _ => k,
        }
    }

    /// Emits the next frame with its timestamp. Scripted events at the same
    /// instant as a keepalive go first; the keepalive then reports the new
    /// state.
    pub fn next_frame(&mut self) -> (u64, [u8; 3]) {
        let k = self.keepalive_time();
        if let Some(e) = self.events.get(self.next_event).copied() {
            if e.t_ms <= k {
                self.next_event += 1;
                let mut frame = encode_pedal_frame(PedalFrame::new(e.bits));
                if e.corrupt {
                    frame[2] ^= 0xFF;
                } else {
                    self.bits = e.bits & pedal_bits::ALL;
                }
                return (e.t_ms, frame);
            }
        }
        self.next_keepalive += 1;
        (k, encode_pedal_frame(PedalFrame::new(self.bits)))
    }

    /// All frames with timestamps up to and including `now_ms`.
    pub fn frames_until(&mut self, now_ms: u64) -> Vec<(u64, [u8; 3])> {
        let mut out = Vec::new();
        while self.next_frame_at() <= now_ms {
            out.push(self.next_frame());
        }
        out
    }

    /// Wraps the source as a real-time byte stream paced by `clock`.
    pub fn into_reader(self, clock: Arc<dyn Clock>, shutdown: Shutdown) -> PacedReader {
        PacedReader::new(Box::new(PedalFrames(self)), clock, shutdown)
    }
}

/// One scripted leader pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderKeyframe {
    pub t_ms: u64,
    pub joints: [f64; ARM_JOINTS],
    pub gripper: f64,
}

/// Leader-arm stream interpolating linearly between keyframes.
#[derive(Debug, Clone)]
pub struct SimulatedLeaderSource {
    side: ArmSide,
    keyframes: Vec<LeaderKeyframe>,
    period_ms: f64,
    index: u64,
}

impl SimulatedLeaderSource {
    pub fn new(side: ArmSide, keyframes: Vec<LeaderKeyframe>, rate_hz: f64) -> Result<Self, ScriptError> {
        check_order(keyframes.iter().map(|k| k.t_ms))?;
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(ScriptError::Invalid("leader rate must be positive"));
        }
        Ok(SimulatedLeaderSource {
            side,
            keyframes,
            period_ms: 1000.0 / rate_hz,
            index: 0,
        })
    }

    pub fn side(&self) -> ArmSide {
        self.side
    }

    /// Interpolated pose at `t_ms`; held at the ends, neutral if empty.
    pub fn pose_at(&self, t_ms: u64) -> ArmJointVector {
        let k = &self.keyframes;
        let (joints, gripper) = match k.iter().position(|f| f.t_ms > t_ms) {
            None => k.last().map(|f| (f.joints, f.gripper)).unwrap_or(([0.0; ARM_JOINTS], 0.0)),
            Some(0) => (k[0].joints, k[0].gripper),
            Some(i) => {
                let (a, b) = (&k[i - 1], &k[i]);
                let s = (t_ms - a.t_ms) as f64 / (b.t_ms - a.t_ms) as f64;
                let j: [f64; ARM_JOINTS] = std::array::from_fn(|n| a.joints[n] + s * (b.joints[n] - a.joints[n]));
                (j, a.gripper + s * (b.gripper - a.gripper))
            }
        };
        ArmJointVector {
            side: self.side,
            joints,
            gripper,
        }
    }

    pub fn next_frame_at(&self) -> u64 {
        (self.index as f64 * self.period_ms).round() as u64
    }

    pub fn next_frame(&mut self) -> (u64, [u8; 14]) {
        let t = self.next_frame_at();
        self.index += 1;
        (t, encode_leader_frame(&self.pose_at(t)))
    }

    pub fn frames_until(&mut self, now_ms: u64) -> Vec<(u64, [u8; 14])> {
        let mut out = Vec::new();
        while self.next_frame_at() <= now_ms {
            out.push(self.next_frame());
        }
        out
    }

    pub fn into_reader(self, clock: Arc<dyn Clock>, shutdown: Shutdown) -> PacedReader {
        PacedReader::new(Box::new(LeaderFrames(self)), clock, shutdown)
    }
}

/// A scripted source of timed frames.
pub trait FrameScript: Send {
    fn next_at(&self) -> u64;
    fn next_bytes(&mut self) -> Vec<u8>;
}

struct PedalFrames(SimulatedPedalSource);

impl FrameScript for PedalFrames {
    fn next_at(&self) -> u64 {
        self.0.next_frame_at()
    }
    fn next_bytes(&mut self) -> Vec<u8> {
        self.0.next_frame().1.to_vec()
    }
}

struct LeaderFrames(SimulatedLeaderSource);

impl FrameScript for LeaderFrames {
    fn next_at(&self) -> u64 {
        self.0.next_frame_at()
    }
    fn next_bytes(&mut self) -> Vec<u8> {
        self.0.next_frame().1.to_vec()
    }
}

/// Blocking [`Read`] adapter that releases each frame at its scripted
/// time, relative to the moment the reader was created. Returns EOF once
/// `shutdown` fires.
pub struct PacedReader {
    script: Box<dyn FrameScript>,
    clock: Arc<dyn Clock>,
    origin: Duration,
    shutdown: Shutdown,
    pending: Vec<u8>,
}

impl PacedReader {
    pub fn new(script: Box<dyn FrameScript>, clock: Arc<dyn Clock>, shutdown: Shutdown) -> Self {
        let origin = clock.elapsed();
        PacedReader {
            script,
            clock,
            origin,
            shutdown,
            pending: Vec::new(),
        }
    }
}

impl Read for PacedReader {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        if self.pending.is_empty() {
            let at = self.origin + Duration::from_millis(self.script.next_at());
            // Sleep in slices so shutdown is noticed promptly.
            loop {
                if self.shutdown.is_triggered() {
                    return Ok(0);
                }
                let now = self.clock.elapsed();
                if now >= at {
                    break;
                }
                self.clock.sleep_until(at.min(now + Duration::from_millis(50)));
            }
            self.pending = self.script.next_bytes();
        }
        let n = buf.len().min(self.pending.len());
        buf[..n].copy_from_slice(&self.pending[..n]);
        self.pending.drain(..n);
        Ok(n)
    }
}
