//! Detection-rate evaluation over recorded sessions: gesture × region rate
//! tables, per-region means, global threshold sweeps and idle false-positive
//! rates.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::detect::{sensor_verdict, touch_set_at, trial_verdict, DetectError, TouchEvent};
use crate::model::{DetectionConfig, GestureKind, RegionId, SENSOR_COUNT};
use crate::session::SessionLog;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("session contains no labeled trials")]
    NoTrials,
    #[error("region {region} has no {gesture} trials")]
    MissingCell { region: RegionId, gesture: GestureKind },
    #[error("threshold list is empty")]
    EmptyThresholds,
    #[error("thresholds must be strictly increasing and at most 1024; got {0:?}")]
    BadThresholds(Vec<u16>),
    #[error("idle log contains a labeled frame at t_ms={0}")]
    LabeledFrame(u32),
    #[error(transparent)]
    Detect(#[from] DetectError),
}

/// `round(100 × num / den)`, halves away from zero. `den` must be positive.
pub fn percent_rounded(num: u64, den: u64) -> u32 {
    ((200 * num + den) / (2 * den)) as u32
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RateCell {
    pub detected: u32,
    pub trials: u32,
}

impl RateCell {
    pub fn percent(&self) -> u32 {
        percent_rounded(u64::from(self.detected), u64::from(self.trials))
    }

    pub fn rate(&self) -> f64 {
        f64::from(self.detected) / f64::from(self.trials)
    }
}

/// Detection counts per (region, gesture). Rows keep the order in which
/// regions first appear in the session.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RateTable {
    regions: Vec<RegionId>,
    cells: BTreeMap<(RegionId, GestureKind), RateCell>,
}

impl RateTable {
    pub fn regions(&self) -> &[RegionId] {
        &self.regions
    }

    pub fn cell(&self, region: RegionId, gesture: GestureKind) -> Option<&RateCell> {
        self.cells.get(&(region, gesture))
    }

    /// Adds one trial outcome.
    pub fn record(&mut self, region: RegionId, gesture: GestureKind, detected: bool) {
        if !self.regions.contains(&region) {
            self.regions.push(region);
        }
        let cell = self.cells.entry((region, gesture)).or_default();
        cell.trials += 1;
        cell.detected += u32::from(detected);
    }

    /// Cells in row order, gestures in study order.
    pub fn iter(&self) -> impl Iterator<Item = (RegionId, GestureKind, &RateCell)> + '_ {
        self.regions.iter().flat_map(move |&r| {
            GestureKind::STUDY
                .into_iter()
                .filter_map(move |g| self.cell(r, g).map(|c| (r, g, c)))
        })
    }

    pub fn total(&self) -> RateCell {
        self.cells.values().fold(RateCell::default(), |acc, c| RateCell {
            detected: acc.detected + c.detected,
            trials: acc.trials + c.trials,
        })
    }

    /// Machine-readable form: `gesture,region,detected,trials,percent`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("gesture,region,detected,trials,percent\n");
        for (region, gesture, cell) in self.iter() {
            let _ = writeln!(
                out,
                "{gesture},{region},{},{},{}",
                cell.detected,
                cell.trials,
                cell.percent()
            );
        }
        out
    }

    /// Aligned text table, one row per region, plus the region mean when the
    /// row is complete.
    pub fn to_text(&self) -> String {
        let width = self.regions.iter().map(|r| r.token().len()).max().unwrap_or(6).max(6);
        let mut out = format!("{:width$}", "region");
        for g in GestureKind::STUDY {
            let _ = write!(out, " {:>8}", g.token());
        }
        out.push_str("     mean\n");
        for &region in &self.regions {
            let _ = write!(out, "{:width$}", region.token());
            for g in GestureKind::STUDY {
                match self.cell(region, g) {
                    Some(c) => {
                        let _ = write!(out, " {:>7}%", c.percent());
                    }
                    None => {
                        let _ = write!(out, " {:>8}", "-");
                    }
                }
            }
            match region_mean(self, region) {
                Ok(m) => {
                    let _ = writeln!(out, " {m:>7}%");
                }
                Err(_) => out.push_str("        -\n"),
            }
        }
        out
    }
}

/// Per (gesture, region) detection rates of every labeled trial in `log`.
pub fn detection_table(log: &SessionLog, config: &DetectionConfig) -> Result<RateTable, EvalError> {
    let trials = log.trials();
    if trials.is_empty() {
        return Err(EvalError::NoTrials);
    }
    let mut table = RateTable::default();
    for trial in trials {
        let verdict = trial_verdict(trial.frames(), trial.label, config)?;
        let region = trial.label.region().expect("trials are labeled");
        table.record(region, trial.label.gesture(), verdict.detected);
    }
    Ok(table)
}

fn region_mean(table: &RateTable, region: RegionId) -> Result<u32, EvalError> {
    let mut sum = 0u64;
    for gesture in GestureKind::STUDY {
        let cell = table
            .cell(region, gesture)
            .ok_or(EvalError::MissingCell { region, gesture })?;
        sum += u64::from(cell.percent());
    }
    // Mean of percentages, rounded with the same rule as the cells.
    Ok(percent_rounded(sum, 100 * GestureKind::STUDY.len() as u64))
}

/// Unweighted mean of each region's five cell percentages.
pub fn region_summary(table: &RateTable) -> Result<Vec<(RegionId, u32)>, EvalError> {
    table
        .regions()
        .iter()
        .map(|&r| region_mean(table, r).map(|m| (r, m)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub threshold: u16,
    pub detection_rate: f64,
    pub false_positive_rate: f64,
}

pub type SweepCurve = Vec<SweepPoint>;

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Applies each threshold to every sensor and reports the trial detection
/// rate and the fraction of idle frames with a non-empty touch set.
pub fn threshold_sweep(log: &SessionLog, thresholds: &[u16]) -> Result<SweepCurve, EvalError> {
    if thresholds.is_empty() {
        return Err(EvalError::EmptyThresholds);
    }
    if thresholds.windows(2).any(|w| w[0] >= w[1]) || thresholds.iter().any(|&t| t > 1024) {
        return Err(EvalError::BadThresholds(thresholds.to_vec()));
    }
    let trials = log.trials();
    let idle: Vec<_> = log.idle_frames().collect();
    Ok(thresholds
        .iter()
        .map(|&t| {
            let detected = trials
                .iter()
                .filter(|trial| {
                    let sensor = trial.label.region().expect("trials are labeled").sensor_index();
                    sensor_verdict(trial.frames(), sensor, t).detected
                })
                .count();
            let all = [t; SENSOR_COUNT];
            let false_positives = idle.iter().filter(|f| !touch_set_at(f, &all).is_empty()).count();
            SweepPoint {
                threshold: t,
                detection_rate: ratio(detected, trials.len()),
                false_positive_rate: ratio(false_positives, idle.len()),
            }
        })
        .collect())
}

/// Fraction of frames in an idle-only log that register any touch.
pub fn false_positive_rate(idle_log: &SessionLog, config: &DetectionConfig) -> Result<f64, EvalError> {
    if let Some(row) = idle_log.rows().iter().find(|r| !r.label.is_idle()) {
        return Err(EvalError::LabeledFrame(row.frame.t_ms()));
    }
    let thresholds = config.thresholds().values();
    let hits = idle_log
        .frames()
        .filter(|f| !touch_set_at(f, thresholds).is_empty())
        .count();
    Ok(ratio(hits, idle_log.len()))
}

/// Like [`false_positive_rate`] but only over the `none`-labeled frames of a
/// mixed session.
pub fn idle_false_positive_rate(log: &SessionLog, config: &DetectionConfig) -> f64 {
    let thresholds = config.thresholds().values();
    let idle: Vec<_> = log.idle_frames().collect();
    let hits = idle.iter().filter(|f| !touch_set_at(f, thresholds).is_empty()).count();
    ratio(hits, idle.len())
}

pub fn summary_to_text(summary: &[(RegionId, u32)]) -> String {
    summary
        .iter()
        .map(|(r, m)| format!("{r}: {m}% of all gestures detected\n"))
        .collect()
}

pub fn sweep_to_csv(curve: &[SweepPoint]) -> String {
    let mut out = String::from("threshold,detection_rate,false_positive_rate\n");
    for p in curve {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6}",
            p.threshold, p.detection_rate, p.false_positive_rate
        );
    }
    out
}

pub fn events_to_csv(events: &[TouchEvent]) -> String {
    let mut out = String::from("sensor,region,start_t_ms,end_t_ms,peak_delta,frame_count\n");
    for e in events {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            e.sensor_index, e.region, e.start_t_ms, e.end_t_ms, e.peak_delta, e.frame_count
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SensorFrame, TrialLabel};

    #[test]
    fn rounding_half_away_from_zero() {
        assert_eq!(percent_rounded(18, 20), 90);
        assert_eq!(percent_rounded(1, 8), 13); // 12.5
        assert_eq!(percent_rounded(1, 3), 33);
        assert_eq!(percent_rounded(2, 3), 67);
        assert_eq!(percent_rounded(0, 7), 0);
        assert_eq!(percent_rounded(7, 7), 100);
    }

    fn row_table(region: RegionId, percents: [u32; 5]) -> RateTable {
        // Counts out of 20 realizing the given percentages.
        let mut t = RateTable::default();
        for (g, p) in GestureKind::STUDY.into_iter().zip(percents) {
            let detected = p / 5;
            for k in 0..20 {
                t.record(region, g, k < detected);
            }
        }
        t
    }

    #[test]
    fn region_summary_examples() {
        let trunk = row_table(RegionId::RightTrunk, [100, 90, 100, 85, 95]);
        assert_eq!(region_summary(&trunk).unwrap(), vec![(RegionId::RightTrunk, 94)]);
        let cheek = row_table(RegionId::RightCheek, [70, 60, 50, 55, 65]);
        assert_eq!(region_summary(&cheek).unwrap(), vec![(RegionId::RightCheek, 60)]);
        let top = row_table(RegionId::TopHead, [100, 100, 100, 95, 85]);
        assert_eq!(region_summary(&top).unwrap(), vec![(RegionId::TopHead, 96)]);
    }

    #[test]
    fn region_summary_needs_all_cells() {
        let mut t = RateTable::default();
        t.record(RegionId::TopHead, GestureKind::Poke, true);
        assert_eq!(
            region_summary(&t),
            Err(EvalError::MissingCell {
                region: RegionId::TopHead,
                gesture: GestureKind::Contact
            })
        );
    }

    fn session(peaks: &[(GestureKind, u16)], idle_deltas: &[u16]) -> SessionLog {
        let mut log = SessionLog::new("p01").unwrap();
        let mut t = 0;
        let mut push = |log: &mut SessionLog, delta: u16, label: TrialLabel| {
            let mut f = [512; SENSOR_COUNT];
            f[0] = 512 - delta;
            log.push(SensorFrame::new(0, t, f, [512; SENSOR_COUNT]).unwrap(), label)
                .unwrap();
            t += 110;
        };
        for &d in idle_deltas {
            push(&mut log, d, TrialLabel::idle("p01").unwrap());
        }
        for &(g, peak) in peaks {
            push(&mut log, 0, TrialLabel::idle("p01").unwrap());
            let label = TrialLabel::trial(g, RegionId::TopHead, "p01").unwrap();
            push(&mut log, peak, label.clone());
            push(&mut log, peak / 2, label);
        }
        log
    }

    #[test]
    fn detection_table_counts() {
        let log = session(
            &[(GestureKind::Poke, 30), (GestureKind::Poke, 5), (GestureKind::Pat, 10)],
            &[],
        );
        let table = detection_table(&log, &DetectionConfig::default()).unwrap();
        assert_eq!(
            table.cell(RegionId::TopHead, GestureKind::Poke),
            Some(&RateCell { detected: 1, trials: 2 })
        );
        assert_eq!(table.cell(RegionId::TopHead, GestureKind::Pat).unwrap().percent(), 100);
        assert_eq!(table.total(), RateCell { detected: 2, trials: 3 });
        assert_eq!(
            table.to_csv(),
            "gesture,region,detected,trials,percent\npat,top_head,1,1,100\npoke,top_head,1,2,50\n"
        );
    }

    #[test]
    fn detection_table_never_crossing_is_zero() {
        let peaks: Vec<_> = GestureKind::STUDY.iter().map(|&g| (g, 9)).collect();
        let table = detection_table(&session(&peaks, &[]), &DetectionConfig::default()).unwrap();
        assert!(table.iter().all(|(_, _, c)| c.percent() == 0));
    }

    #[test]
    fn detection_table_requires_trials() {
        let log = session(&[], &[0, 0]);
        assert_eq!(
            detection_table(&log, &DetectionConfig::default()),
            Err(EvalError::NoTrials)
        );
    }

    #[test]
    fn sweep_degenerate_ends() {
        let log = session(&[(GestureKind::Poke, 30), (GestureKind::Pat, 3)], &[0, 4, 12]);
        let curve = threshold_sweep(&log, &[0, 10, 1024]).unwrap();
        assert_eq!(curve[0].detection_rate, 1.0);
        assert_eq!(curve[0].false_positive_rate, 1.0);
        assert_eq!(curve[1].detection_rate, 0.5);
        // Idle frames: 3 leading plus one before each trial; one crosses 10.
        assert_eq!(curve[1].false_positive_rate, 0.2);
        assert_eq!(curve[2].detection_rate, 0.0);
        assert_eq!(curve[2].false_positive_rate, 0.0);
    }

    #[test]
    fn sweep_argument_errors() {
        let log = session(&[(GestureKind::Poke, 30)], &[]);
        assert_eq!(threshold_sweep(&log, &[]), Err(EvalError::EmptyThresholds));
        assert!(matches!(
            threshold_sweep(&log, &[10, 10]),
            Err(EvalError::BadThresholds(_))
        ));
        assert!(matches!(
            threshold_sweep(&log, &[1025]),
            Err(EvalError::BadThresholds(_))
        ));
    }

    #[test]
    fn false_positive_rate_counts_frames() {
        let mut deltas = vec![0u16; 100];
        deltas[5] = 10;
        deltas[50] = 11;
        deltas[99] = 200;
        let log = session(&[], &deltas);
        let cfg = DetectionConfig::default();
        assert_eq!(false_positive_rate(&log, &cfg).unwrap(), 0.03);
        let quiet = session(&[], &[0; 50]);
        assert_eq!(false_positive_rate(&quiet, &cfg).unwrap(), 0.0);

        let labeled = session(&[(GestureKind::Poke, 30)], &[0]);
        assert!(matches!(
            false_positive_rate(&labeled, &cfg),
            Err(EvalError::LabeledFrame(_))
        ));
    }

    #[test]
    fn false_positive_rate_at_zero_threshold_is_one() {
        let log = session(&[], &[0; 20]);
        let curve = threshold_sweep(&log, &[0]).unwrap();
        assert_eq!(curve[0].false_positive_rate, 1.0);
    }

    #[test]
    fn text_report_shape() {
        let t = row_table(RegionId::RightTrunk, [100, 90, 100, 85, 95]);
        let text = t.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("region"));
        assert!(lines[1].starts_with("right_trunk"));
        assert!(lines[1].trim_end().ends_with("94%"));
    }
}
