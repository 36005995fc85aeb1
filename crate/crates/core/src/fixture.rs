//! Builds session logs that realize given per-cell detection counts, used to
//! ship the reference study results as a replayable session.

use crate::model::{GestureKind, RegionId, SensorFrame, TrialLabel, SENSOR_COUNT};
use crate::session::{SessionError, SessionLog};
use crate::sim::participant_id;

/// Detected trials out of `trials` for one (region, gesture) cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CountCell {
    pub region: RegionId,
    pub gesture: GestureKind,
    pub detected: u32,
    pub trials: u32,
}

/// Reference per-cell counts out of 20 participants; rows are trunk, cheek
/// and top of head.
pub const STUDY_COUNTS_CSV: &str = include_str!("../fixtures/study_counts.csv");

/// Parses `region,gesture,detected,trials` lines.
pub fn parse_counts(text: &str) -> Result<Vec<CountCell>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some("region,gesture,detected,trials") => {}
        other => return Err(format!("unexpected header {other:?}")),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(k, line)| {
            let err = |m: &str| format!("line {}: {m}", k + 2);
            let fields: Vec<&str> = line.split(',').collect();
            let [region, gesture, detected, trials] = fields[..] else {
                return Err(err("expected 4 fields"));
            };
            let cell = CountCell {
                region: region.parse().map_err(|_| err("bad region"))?,
                gesture: gesture.parse().map_err(|_| err("bad gesture"))?,
                detected: detected.parse().map_err(|_| err("bad detected count"))?,
                trials: trials.parse().map_err(|_| err("bad trial count"))?,
            };
            if cell.gesture.is_none() || cell.detected > cell.trials || cell.trials == 0 {
                return Err(err("inconsistent cell"));
            }
            Ok(cell)
        })
        .collect()
}

/// Study counts shipped with the crate.
pub fn study_counts() -> Vec<CountCell> {
    parse_counts(STUDY_COUNTS_CSV).expect("shipped fixture is well-formed")
}

/// Labeled-sensor deltas of one trial window.
const DETECTED_TRACE: [u16; 3] = [3, 12, 4];
const MISSED_TRACE: [u16; 3] = [3, 5, 2];
const IDLE_FRAMES: usize = 2;
const REST: u16 = 512;

/// Session in which participant `p` (1-based) is detected in a cell iff
/// `p <= detected`. Detected trials peak at delta 12, missed ones at 5, so the
/// counts are realized at threshold 10.
pub fn session_from_counts(cells: &[CountCell]) -> Result<SessionLog, SessionError> {
    let participants = cells.iter().map(|c| c.trials).max().unwrap_or(0);
    let mut regions: Vec<RegionId> = Vec::new();
    for c in cells {
        if !regions.contains(&c.region) {
            regions.push(c.region);
        }
    }

    let mut log = SessionLog::default();
    let mut t_ms = 0u32;
    let mut seq = 0u16;
    let mut emit = |log: &mut SessionLog, sensor: Option<usize>, delta: u16, label: TrialLabel| {
        let mut filtered = [REST; SENSOR_COUNT];
        if let Some(s) = sensor {
            filtered[s] = REST - delta;
        }
        let frame = SensorFrame::new(seq, t_ms, filtered, [REST; SENSOR_COUNT]).expect("counts in range");
        seq = seq.wrapping_add(1);
        t_ms += 110;
        log.push(frame, label)
    };

    for p in 1..=participants {
        let id = participant_id(p as usize);
        for &region in &regions {
            for gesture in GestureKind::STUDY {
                let Some(cell) = cells.iter().find(|c| c.region == region && c.gesture == gesture) else {
                    continue;
                };
                if p > cell.trials {
                    continue;
                }
                for _ in 0..IDLE_FRAMES {
                    emit(&mut log, None, 0, TrialLabel::idle(&id)?)?;
                }
                let trace = if p <= cell.detected {
                    DETECTED_TRACE
                } else {
                    MISSED_TRACE
                };
                let label = TrialLabel::trial(gesture, region, &id)?;
                for delta in trace {
                    emit(&mut log, Some(region.sensor_index()), delta, label.clone())?;
                }
            }
        }
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_counts_cover_fifteen_cells() {
        let cells = study_counts();
        assert_eq!(cells.len(), 15);
        assert!(cells.iter().all(|c| c.trials == 20));
        let stroke_trunk = cells
            .iter()
            .find(|c| c.region == RegionId::RightTrunk && c.gesture == GestureKind::Stroke)
            .unwrap();
        assert_eq!(stroke_trunk.detected, 18);
    }

    #[test]
    fn parse_rejects_bad_input() {
        assert!(parse_counts("a,b\n").is_err());
        assert!(parse_counts("region,gesture,detected,trials\ntop_head,poke,21,20\n").is_err());
        assert!(parse_counts("region,gesture,detected,trials\ntop_head,none,1,20\n").is_err());
        assert!(parse_counts("region,gesture,detected,trials\ntop_head,poke,1\n").is_err());
    }

    #[test]
    fn session_layout() {
        let cells = [CountCell {
            region: RegionId::TopHead,
            gesture: GestureKind::Poke,
            detected: 1,
            trials: 2,
        }];
        let log = session_from_counts(&cells).unwrap();
        assert_eq!(log.len(), 2 * (IDLE_FRAMES + 3));
        assert_eq!(log.trials().len(), 2);
        assert_eq!(log.participant(), "p01");
    }
}
