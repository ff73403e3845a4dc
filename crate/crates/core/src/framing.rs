// SPDX-License-Identifier: Apache-2.0

//! Fixed-length, header-delimited frames with a trailing XOR checksum.
//!
//! Both the pedal controller and the leader arms speak this shape: one
//! header byte, a fixed payload, and a final byte equal to the XOR of
//! every byte before it. [`FrameDecoder`] recovers frames from an
//! arbitrary byte stream and resynchronizes on the next header byte after
//! garbage or a failed checksum.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("expected header 0x{expected:02X}, found 0x{found:02X}")]
    BadHeader { expected: u8, found: u8 },
    #[error("expected a {expected}-byte frame, got {found} bytes")]
    BadLength { expected: usize, found: usize },
    #[error("skipped {0} bytes while resynchronizing")]
    Resync(usize),
    #[error("checksum mismatch: computed 0x{computed:02X}, frame carries 0x{carried:02X}")]
    Checksum { computed: u8, carried: u8 },
    #[error("corrupt frame: {0}")]
    Invalid(&'static str),
}

impl FrameError {
    /// Framing errors mean the byte stream lost alignment.
    pub fn is_framing(&self) -> bool {
        matches!(
            self,
            FrameError::BadHeader { .. } | FrameError::BadLength { .. } | FrameError::Resync(_)
        )
    }

    /// Corrupt errors mean an aligned frame failed validation and was dropped.
    pub fn is_corrupt(&self) -> bool {
        !self.is_framing()
    }
}

pub fn xor_checksum(bytes: &[u8]) -> u8 {
    bytes.iter().fold(0, |acc, b| acc ^ b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameLayout {
    pub header: u8,
    pub len: usize,
}

impl FrameLayout {
    /// Validates header, length and checksum of a single complete frame.
    pub fn check<'a>(&self, frame: &'a [u8]) -> Result<&'a [u8], FrameError> {
        if frame.len() != self.len {
            return Err(FrameError::BadLength {
                expected: self.len,
                found: frame.len(),
            });
        }
        if frame[0] != self.header {
            return Err(FrameError::BadHeader {
                expected: self.header,
                found: frame[0],
            });
        }
        let computed = xor_checksum(&frame[..self.len - 1]);
        let carried = frame[self.len - 1];
        if computed != carried {
            return Err(FrameError::Checksum { computed, carried });
        }
        Ok(frame)
    }

    /// Appends the checksum to `body` (which must start with the header).
    pub fn seal(&self, body: &mut Vec<u8>) {
        debug_assert_eq!(body.len() + 1, self.len);
        debug_assert_eq!(body[0], self.header);
        let c = xor_checksum(body);
        body.push(c);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DecoderStats {
    pub frames: u64,
    pub corrupt: u64,
    pub skipped_bytes: u64,
}

/// Streaming decoder: push bytes in, get checksum-valid frames out.
#[derive(Debug, Clone)]
pub struct FrameDecoder {
    layout: FrameLayout,
    buf: Vec<u8>,
    stats: DecoderStats,
}

impl FrameDecoder {
    pub fn new(layout: FrameLayout) -> Self {
        FrameDecoder {
            layout,
            buf: Vec::with_capacity(layout.len * 4),
            stats: DecoderStats::default(),
        }
    }

    pub fn stats(&self) -> DecoderStats {
        self.stats
    }

    /// Bytes held while waiting for the rest of a frame.
    pub fn pending(&self) -> usize {
        self.buf.len()
    }

    pub fn push(&mut self, bytes: &[u8]) -> Vec<Result<Vec<u8>, FrameError>> {
        self.buf.extend_from_slice(bytes);
        let mut out = Vec::new();
        let mut skipped = 0usize;
        let mut cursor = 0usize;

        loop {
            let Some(offset) = self.buf[cursor..].iter().position(|&b| b == self.layout.header)
            else {
                skipped += self.buf.len() - cursor;
                cursor = self.buf.len();
                break;
            };
            skipped += offset;
            let start = cursor + offset;
            if self.buf.len() - start < self.layout.len {
                cursor = start;
                break;
            }
            if skipped > 0 {
                out.push(Err(FrameError::Resync(skipped)));
                self.stats.skipped_bytes += skipped as u64;
                skipped = 0;
            }
            let candidate = &self.buf[start..start + self.layout.len];
            match self.layout.check(candidate) {
                Ok(frame) => {
                    out.push(Ok(frame.to_vec()));
                    self.stats.frames += 1;
                    cursor = start + self.layout.len;
                }
                Err(e) => {
                    // Drop only the header byte: the real frame may start inside.
                    out.push(Err(e));
                    self.stats.corrupt += 1;
                    cursor = start + 1;
                }
            }
        }
        if skipped > 0 {
            out.push(Err(FrameError::Resync(skipped)));
            self.stats.skipped_bytes += skipped as u64;
        }
        self.buf.drain(..cursor);
        out
    }
}
