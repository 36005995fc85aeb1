//! Reference implementations used as test oracles. None of these call into
//! the code paths they check.

#![allow(dead_code)]

use tactile_core::model::{SensorFrame, MAX_COUNT, SENSOR_COUNT};
use tactile_core::wire::FRAME_LEN;

/// Shift-register CRC-8 (poly 0x07, init 0, MSB first), one bit at a time.
pub fn crc8_bitwise(bytes: &[u8]) -> u8 {
    let mut reg: u8 = 0;
    for &byte in bytes {
        for bit in (0..8).rev() {
            let input = (byte >> bit) & 1;
            let top = reg >> 7;
            reg <<= 1;
            if top ^ input == 1 {
                reg ^= 0x07;
            }
        }
    }
    reg
}

/// Decodes a complete buffer by testing every alignment: a frame is accepted
/// at offset `i` if the 46 bytes there form a valid image; scanning then
/// resumes after it.
pub fn reference_decode(stream: &[u8]) -> Vec<SensorFrame> {
    let mut out = Vec::new();
    let mut i = 0;
    while i + FRAME_LEN <= stream.len() {
        match reference_parse(&stream[i..i + FRAME_LEN]) {
            Some(frame) => {
                out.push(frame);
                i += FRAME_LEN;
            }
            None => i += 1,
        }
    }
    out
}

fn reference_parse(b: &[u8]) -> Option<SensorFrame> {
    if b[0] != 0xB1 || b[1] != 0x05 || b[2] != 0x01 || crc8_bitwise(&b[2..45]) != b[45] {
        return None;
    }
    let word = |at: usize| b[at] as u16 | (b[at + 1] as u16) << 8;
    let mut filtered = [0u16; SENSOR_COUNT];
    let mut baseline = [0u16; SENSOR_COUNT];
    for i in 0..SENSOR_COUNT {
        filtered[i] = word(9 + 2 * i);
        baseline[i] = word(27 + 2 * i);
    }
    if filtered.iter().chain(&baseline).any(|&c| c > MAX_COUNT) {
        return None;
    }
    let t_ms = u32::from_le_bytes([b[5], b[6], b[7], b[8]]);
    SensorFrame::new(word(3), t_ms, filtered, baseline).ok()
}

/// Event summary from the run-length oracle: (first frame, last touched
/// frame, touched frames).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleEvent {
    pub first: usize,
    pub last: usize,
    pub touched: usize,
}

/// Run-length formulation of debouncing. An event starts at a touched run
/// of length ≥ `on`; it absorbs every following touched run (of any length)
/// that is separated by fewer than `off` untouched frames, and ends with the
/// first gap of ≥ `off` untouched frames or with the stream.
pub fn runlength_events(flags: &[bool], on: usize, off: usize) -> Vec<OracleEvent> {
    let mut runs: Vec<(bool, usize, usize)> = Vec::new(); // (value, start, len)
    for (k, &f) in flags.iter().enumerate() {
        match runs.last_mut() {
            Some((v, _, len)) if *v == f => *len += 1,
            _ => runs.push((f, k, 1)),
        }
    }
    let mut events = Vec::new();
    let mut open: Option<OracleEvent> = None;
    for &(value, start, len) in &runs {
        match (value, open.as_mut()) {
            (true, None) if len >= on => {
                open = Some(OracleEvent {
                    first: start,
                    last: start + len - 1,
                    touched: len,
                })
            }
            (true, None) => {}
            (true, Some(ev)) => {
                ev.last = start + len - 1;
                ev.touched += len;
            }
            (false, Some(_)) if len >= off => events.push(open.take().unwrap()),
            (false, _) => {}
        }
    }
    events.extend(open);
    events
}

/// Frame whose sensor `i` has |B − F| = `deltas[i]`. With `above` the
/// filtered count sits above a zero baseline, otherwise below a baseline of
/// 1023, so any delta up to 1023 is representable.
pub fn frame_from_deltas(seq: u16, t_ms: u32, deltas: [u16; SENSOR_COUNT], above: bool) -> SensorFrame {
    let (baseline, filtered) = if above {
        ([0u16; SENSOR_COUNT], deltas)
    } else {
        ([MAX_COUNT; SENSOR_COUNT], deltas.map(|d| MAX_COUNT - d))
    };
    SensorFrame::new(seq, t_ms, filtered, baseline).unwrap()
}

#[test]
fn crc_oracle_check_value() {
    // Catalogued check value of CRC-8/SMBUS (poly 0x07, init 0, no reflection, no xorout).
    assert_eq!(crc8_bitwise(b"123456789"), 0xF4);
    assert_eq!(crc8_bitwise(&[]), 0x00);
}

#[test]
fn runlength_oracle_hand_traces() {
    let f = |s: &str| s.bytes().map(|b| b == b'1').collect::<Vec<_>>();
    assert_eq!(
        runlength_events(&f("0011100"), 2, 2),
        vec![OracleEvent {
            first: 2,
            last: 4,
            touched: 3
        }]
    );
    assert!(runlength_events(&f("0100"), 2, 2).is_empty());
    assert_eq!(runlength_events(&f("101"), 1, 1).len(), 2);
    assert_eq!(
        runlength_events(&f("1101000111"), 2, 3),
        vec![
            OracleEvent {
                first: 0,
                last: 3,
                touched: 3
            },
            OracleEvent {
                first: 7,
                last: 9,
                touched: 3
            }
        ]
    );
}
