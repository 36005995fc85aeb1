//! Device-to-host frame codec.
//!
//! Every frame is a fixed 46-byte image:
//!
//! ```text
//! offset  size  field
//!  0       2    magic 0xB1 0x05
//!  2       1    version (0x01)
//!  3       2    seq, u16 little-endian
//!  5       4    t_ms, u32 little-endian
//!  9      18    filtered F_0..F_8, u16 little-endian each
//! 27      18    baseline B_0..B_8, u16 little-endian each
//! 45       1    CRC-8 (poly 0x07, init 0x00) over bytes 2..=44
//! ```
//!
//! [`StreamDecoder`] accepts arbitrary chunks of a byte stream and resyncs on
//! the magic bytes after corruption.

use serde::Serialize;

use crate::model::{Counts, SensorFrame, MAX_COUNT, SENSOR_COUNT};

pub const FRAME_LEN: usize = 46;
pub const MAGIC: [u8; 2] = [0xB1, 0x05];
pub const VERSION: u8 = 0x01;

const FILTERED_AT: usize = 9;
const BASELINE_AT: usize = FILTERED_AT + 2 * SENSOR_COUNT;
const CRC_AT: usize = FRAME_LEN - 1;

const CRC8_POLY: u8 = 0x07;

const CRC8_TABLE: [u8; 256] = {
    let mut table = [0u8; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = i as u8;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 0x80 != 0 {
                (crc << 1) ^ CRC8_POLY
            } else {
                crc << 1
            };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
};

/// CRC-8, polynomial 0x07, init 0x00, MSB-first, no reflection, no final XOR.
pub fn crc8(bytes: &[u8]) -> u8 {
    bytes.iter().fold(0u8, |crc, &b| CRC8_TABLE[(crc ^ b) as usize])
}

/// Serializes one frame to its 46-byte wire image.
pub fn encode_frame(frame: &SensorFrame) -> [u8; FRAME_LEN] {
    let mut out = [0u8; FRAME_LEN];
    out[..2].copy_from_slice(&MAGIC);
    out[2] = VERSION;
    out[3..5].copy_from_slice(&frame.seq().to_le_bytes());
    out[5..9].copy_from_slice(&frame.t_ms().to_le_bytes());
    for i in 0..SENSOR_COUNT {
        out[FILTERED_AT + 2 * i..FILTERED_AT + 2 * i + 2].copy_from_slice(&frame.filtered()[i].to_le_bytes());
        out[BASELINE_AT + 2 * i..BASELINE_AT + 2 * i + 2].copy_from_slice(&frame.baseline()[i].to_le_bytes());
    }
    out[CRC_AT] = crc8(&out[2..CRC_AT]);
    out
}

/// Why a candidate frame image was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    BadMagic,
    Crc,
    /// Wrong version byte or a count above 1023.
    Range,
}

/// Parses exactly one frame image. `bytes` must be [`FRAME_LEN`] long.
pub fn parse_frame(bytes: &[u8; FRAME_LEN]) -> Result<SensorFrame, Rejection> {
    if bytes[..2] != MAGIC {
        return Err(Rejection::BadMagic);
    }
    if crc8(&bytes[2..CRC_AT]) != bytes[CRC_AT] {
        return Err(Rejection::Crc);
    }
    if bytes[2] != VERSION {
        return Err(Rejection::Range);
    }
    let u16_at = |at: usize| u16::from_le_bytes([bytes[at], bytes[at + 1]]);
    let seq = u16_at(3);
    let t_ms = u32::from_le_bytes([bytes[5], bytes[6], bytes[7], bytes[8]]);
    let filtered: Counts = std::array::from_fn(|i| u16_at(FILTERED_AT + 2 * i));
    let baseline: Counts = std::array::from_fn(|i| u16_at(BASELINE_AT + 2 * i));
    if filtered.iter().chain(&baseline).any(|&c| c > MAX_COUNT) {
        return Err(Rejection::Range);
    }
    SensorFrame::new(seq, t_ms, filtered, baseline).map_err(|_| Rejection::Range)
}

/// Corruption counters accumulated over a decoder's lifetime.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DecodeDiagnostics {
    /// Bytes discarded while scanning for a magic sequence. The first byte of
    /// a frame rejected for CRC or range is counted by that failure instead.
    pub bytes_skipped: u64,
    pub crc_failures: u64,
    pub range_failures: u64,
}

impl DecodeDiagnostics {
    pub fn is_clean(&self) -> bool {
        *self == Self::default()
    }
}

/// Incremental decoder for one byte stream.
#[derive(Debug, Default, Clone)]
pub struct StreamDecoder {
    buf: Vec<u8>,
    diagnostics: DecodeDiagnostics,
}

impl StreamDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn diagnostics(&self) -> DecodeDiagnostics {
        self.diagnostics
    }

    /// Bytes held back waiting for the rest of a frame.
    pub fn pending(&self) -> usize {
        self.buf.len()
    }

    /// Feeds one chunk and returns every frame completed by it, in order.
    pub fn push(&mut self, chunk: &[u8]) -> Vec<SensorFrame> {
        self.buf.extend_from_slice(chunk);
        let mut frames = Vec::new();
        let mut pos = 0;
        while pos < self.buf.len() {
            let rest = &self.buf[pos..];
            if rest[0] != MAGIC[0] || (rest.len() >= 2 && rest[1] != MAGIC[1]) {
                self.diagnostics.bytes_skipped += 1;
                pos += 1;
                continue;
            }
            let Some(image) = rest.get(..FRAME_LEN) else {
                break;
            };
            let image: &[u8; FRAME_LEN] = image.try_into().expect("slice is FRAME_LEN long");
            match parse_frame(image) {
                Ok(frame) => {
                    frames.push(frame);
                    pos += FRAME_LEN;
                }
                Err(rejection) => {
                    match rejection {
                        Rejection::Crc => self.diagnostics.crc_failures += 1,
                        Rejection::Range => self.diagnostics.range_failures += 1,
                        Rejection::BadMagic => unreachable!("magic checked above"),
                    }
                    pos += 1;
                }
            }
        }
        self.buf.drain(..pos);
        frames
    }
}

/// Functional form of [`StreamDecoder::push`]: decodes `chunk` against
/// `state` and returns the new frames with the decoder's running diagnostics.
pub fn decode_stream(chunk: &[u8], state: &mut StreamDecoder) -> (Vec<SensorFrame>, DecodeDiagnostics) {
    let frames = state.push(chunk);
    (frames, state.diagnostics())
}
