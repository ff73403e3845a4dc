// SPDX-License-Identifier: Apache-2.0

//! Camera frames on their way to the operator's phone.
//!
//! [`prepare_frame`] turns portrait frames to landscape and shrinks
//! anything above the display cap; [`FramePacer`] enforces the delivery
//! rate with a latest-wins slot; [`encode_frame_message`] wraps a JPEG in
//! the binary frame message sent over the video stream:
//!
//! ```text
//! b"XLFR" | payload length (u32, big-endian) | JPEG bytes
//! ```

use image::codecs::jpeg::JpegEncoder;
use image::imageops::{self, FilterType};
use image::{ExtendedColorType, ImageEncoder, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_WIDTH: u32 = 1920;
pub const MAX_HEIGHT: u32 = 1080;
pub const FRAME_MAGIC: &[u8; 4] = b"XLFR";
pub const FRAME_HEADER_LEN: usize = 8;
pub const DEFAULT_JPEG_QUALITY: u8 = 80;

#[derive(Debug, Error)]
pub enum VideoError {
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("jpeg encoding failed: {0}")]
    Encode(#[from] image::ImageError),
    #[error("malformed frame message: {0}")]
    MalformedMessage(&'static str),
    #[error("target fps must be positive, got {0}")]
    InvalidRate(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameOrientation {
    Portrait,
    Landscape,
}

/// Packed 24-bit RGB, row-major, top-left origin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoFrame {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
    pub source_orientation: FrameOrientation,
    pub timestamp_ms: u64,
}

impl VideoFrame {
    pub fn new(
        width: u32,
        height: u32,
        pixels: Vec<u8>,
        source_orientation: FrameOrientation,
        timestamp_ms: u64,
    ) -> Result<Self, VideoError> {
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(VideoError::InvalidFrame(format!(
                "{width}x{height} frame needs {expected} bytes, got {}",
                pixels.len()
            )));
        }
        Ok(VideoFrame {
            width,
            height,
            pixels,
            source_orientation,
            timestamp_ms,
        })
    }

    /// Solid-color frame, mostly for tests and placeholders.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3], orientation: FrameOrientation) -> Self {
        let pixels = rgb.repeat(width as usize * height as usize);
        VideoFrame {
            width,
            height,
            pixels,
            source_orientation: orientation,
            timestamp_ms: 0,
        }
    }

    fn to_image(&self) -> RgbImage {
        RgbImage::from_raw(self.width, self.height, self.pixels.clone())
            .expect("length checked at construction")
    }

    fn from_image(img: RgbImage, orientation: FrameOrientation, timestamp_ms: u64) -> Self {
        let (width, height) = img.dimensions();
        VideoFrame {
            width,
            height,
            pixels: img.into_raw(),
            source_orientation: orientation,
            timestamp_ms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rotation {
    #[default]
    Clockwise,
    CounterClockwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrepareOptions {
    pub max_width: u32,
    pub max_height: u32,
    pub rotation: Rotation,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        PrepareOptions {
            max_width: MAX_WIDTH,
            max_height: MAX_HEIGHT,
            rotation: Rotation::Clockwise,
        }
    }
}

/// Output size after an aspect-preserving downscale into the cap.
pub fn fitted_size(width: u32, height: u32, max_w: u32, max_h: u32) -> (u32, u32) {
    if width <= max_w && height <= max_h {
        return (width, height);
    }
    let s = (max_w as f64 / width as f64).min(max_h as f64 / height as f64);
    let w = ((width as f64 * s).round() as u32).clamp(1, max_w);
    let h = ((height as f64 * s).round() as u32).clamp(1, max_h);
    (w, h)
}

/// Rotates portrait frames to landscape, then downscales into the cap.
/// Never upscales. Scaling is nearest-neighbor so output is byte-exact.
pub fn prepare_frame(f: &VideoFrame, opts: &PrepareOptions) -> Result<VideoFrame, VideoError> {
    if f.width == 0 || f.height == 0 {
        return Err(VideoError::InvalidFrame(format!(
            "zero dimension {}x{}",
            f.width, f.height
        )));
    }
    if opts.max_width == 0 || opts.max_height == 0 {
        return Err(VideoError::InvalidFrame("zero resolution cap".into()));
    }
    let rotated = f.source_orientation == FrameOrientation::Portrait;
    let (w, h) = if rotated {
        (f.height, f.width)
    } else {
        (f.width, f.height)
    };
    let (tw, th) = fitted_size(w, h, opts.max_width, opts.max_height);
    if !rotated && (tw, th) == (w, h) {
        return Ok(f.clone());
    }

    let mut img = f.to_image();
    if rotated {
        img = match opts.rotation {
            Rotation::Clockwise => imageops::rotate90(&img),
            Rotation::CounterClockwise => imageops::rotate270(&img),
        };
    }
    if (tw, th) != (w, h) {
        img = imageops::resize(&img, tw, th, FilterType::Nearest);
    }
    Ok(VideoFrame::from_image(img, FrameOrientation::Landscape, f.timestamp_ms))
}

pub fn encode_jpeg(f: &VideoFrame, quality: u8) -> Result<Vec<u8>, VideoError> {
    let mut out = Vec::new();
    JpegEncoder::new_with_quality(&mut out, quality.clamp(1, 100)).write_image(
        &f.pixels,
        f.width,
        f.height,
        ExtendedColorType::Rgb8,
    )?;
    Ok(out)
}

pub fn encode_frame_message(jpeg: &[u8]) -> Vec<u8> {
    let mut msg = Vec::with_capacity(FRAME_HEADER_LEN + jpeg.len());
    msg.extend_from_slice(FRAME_MAGIC);
    msg.extend_from_slice(&(jpeg.len() as u32).to_be_bytes());
    msg.extend_from_slice(jpeg);
    msg
}

/// Returns the JPEG payload of one frame message.
pub fn decode_frame_message(msg: &[u8]) -> Result<&[u8], VideoError> {
    if msg.len() < FRAME_HEADER_LEN {
        return Err(VideoError::MalformedMessage("shorter than header"));
    }
    if &msg[..4] != FRAME_MAGIC {
        return Err(VideoError::MalformedMessage("bad magic"));
    }
    let len = u32::from_be_bytes([msg[4], msg[5], msg[6], msg[7]]) as usize;
    if msg.len() - FRAME_HEADER_LEN != len {
        return Err(VideoError::MalformedMessage("length field disagrees with payload"));
    }
    Ok(&msg[FRAME_HEADER_LEN..])
}

/// Rate limiter with a single latest-wins slot.
///
/// Output slots sit on a fixed grid anchored at the first pushed frame;
/// at most one frame leaves per slot and it is always the newest one
/// pushed so far. Older frames still waiting are discarded.
#[derive(Debug, Clone)]
pub struct FramePacer {
    interval_us: u64,
    anchor_us: Option<u64>,
    next_slot_us: u64,
    pending: Option<VideoFrame>,
    dropped: u64,
}

impl FramePacer {
    pub fn new(target_fps: f64) -> Result<Self, VideoError> {
        if !(target_fps.is_finite() && target_fps > 0.0) {
            return Err(VideoError::InvalidRate(target_fps));
        }
        Ok(FramePacer {
            interval_us: (1_000_000.0 / target_fps).round().max(1.0) as u64,
            anchor_us: None,
            next_slot_us: 0,
            pending: None,
            dropped: 0,
        })
    }

    pub fn interval_us(&self) -> u64 {
        self.interval_us
    }

    /// Frames replaced in the slot before they could be sent.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn next_slot_us(&self) -> Option<u64> {
        self.pending.as_ref().map(|_| self.next_slot_us)
    }

    pub fn push(&mut self, frame: VideoFrame, now_us: u64) {
        if self.anchor_us.is_none() {
            self.anchor_us = Some(now_us);
            self.next_slot_us = now_us;
        }
        if self.pending.replace(frame).is_some() {
            self.dropped += 1;
        }
    }

    pub fn poll(&mut self, now_us: u64) -> Option<VideoFrame> {
        let anchor = self.anchor_us?;
        if now_us < self.next_slot_us {
            return None;
        }
        let frame = self.pending.take()?;
        let k = (now_us - anchor) / self.interval_us + 1;
        self.next_slot_us = anchor + k * self.interval_us;
        Some(frame)
    }
}

/// Paces a recorded arrival timeline, returning `(send_time_us, frame)`
/// as a consumer woken at every slot boundary would emit them.
pub fn pace_frames(
    arrivals: impl IntoIterator<Item = (u64, VideoFrame)>,
    target_fps: f64,
) -> Result<Vec<(u64, VideoFrame)>, VideoError> {
    let mut pacer = FramePacer::new(target_fps)?;
    let mut out = Vec::new();
    for (t, frame) in arrivals {
        while let Some(slot) = pacer.next_slot_us().filter(|&s| s <= t) {
            if let Some(f) = pacer.poll(slot) {
                out.push((slot, f));
            }
        }
        pacer.push(frame, t);
        if let Some(f) = pacer.poll(t) {
            out.push((t, f));
        }
    }
    if let Some(slot) = pacer.next_slot_us() {
        if let Some(f) = pacer.poll(slot) {
            out.push((slot, f));
        }
    }
    Ok(out)
}
