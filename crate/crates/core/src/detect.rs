//! Touch classification, debounced event segmentation, localization,
//! trial verdicts and per-sensor threshold calibration.
//!
//! A sensor is touched in a frame when its delta |B − F| reaches the
//! sensor's threshold. The comparison is inclusive.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::model::{Counts, DetectionConfig, RegionId, SensorFrame, Thresholds, TrialLabel, MAX_COUNT, SENSOR_COUNT};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DetectError {
    #[error("frame at t_ms={t_ms} follows t_ms={previous}")]
    OutOfOrder { previous: u32, t_ms: u32 },
    #[error("trial label has no region")]
    Unlabeled,
    #[error("calibration needs at least one idle frame")]
    EmptyCalibration,
    #[error("invalid margin: {0}")]
    Margin(String),
}

/// A sensor is touched when `|b − f| ≥ t`.
pub fn sensor_touched(baseline: u16, filtered: u16, threshold: u16) -> bool {
    baseline.abs_diff(filtered) >= threshold
}

/// Set of sensor indices, stored as a bitmask.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct TouchSet(u16);

impl TouchSet {
    pub const EMPTY: TouchSet = TouchSet(0);

    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Self {
        let mut set = Self::EMPTY;
        for i in indices {
            set.insert(i);
        }
        set
    }

    pub fn insert(&mut self, sensor: usize) {
        assert!(sensor < SENSOR_COUNT, "sensor index {sensor} out of range");
        self.0 |= 1 << sensor;
    }

    pub fn contains(&self, sensor: usize) -> bool {
        sensor < SENSOR_COUNT && self.0 & (1 << sensor) != 0
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_subset(&self, other: &TouchSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = usize> + '_ {
        (0..SENSOR_COUNT).filter(|&i| self.contains(i))
    }

    pub fn regions(&self) -> impl Iterator<Item = RegionId> + '_ {
        self.iter().map(|i| RegionId::ALL[i])
    }
}

impl Serialize for TouchSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

/// Touch set under an arbitrary per-sensor threshold vector. Thresholds
/// outside the configurable range (0 or 1024) are allowed here so that sweeps
/// can probe the degenerate ends.
pub fn touch_set_at(frame: &SensorFrame, thresholds: &Counts) -> TouchSet {
    TouchSet::from_indices(
        (0..SENSOR_COUNT).filter(|&i| sensor_touched(frame.baseline()[i], frame.filtered()[i], thresholds[i])),
    )
}

/// `{ i : |B_i − F_i| ≥ T_i }`.
pub fn frame_touch_set(frame: &SensorFrame, config: &DetectionConfig) -> TouchSet {
    touch_set_at(frame, config.thresholds().values())
}

/// Region of the touched sensor with the largest delta, lowest index on ties.
pub fn localize(frame: &SensorFrame, config: &DetectionConfig) -> Option<RegionId> {
    let touched = frame_touch_set(frame, config);
    // max_by_key keeps the last maximum, so iterate in reverse index order.
    touched
        .iter()
        .rev()
        .max_by_key(|&i| frame.delta(i))
        .map(|i| RegionId::ALL[i])
}

/// A debounced touch interval on one sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TouchEvent {
    pub sensor_index: usize,
    pub region: RegionId,
    pub start_t_ms: u32,
    pub end_t_ms: u32,
    pub peak_delta: u16,
    pub frame_count: u32,
}

#[derive(Debug, Clone, Copy)]
struct Accumulator {
    start_t_ms: u32,
    end_t_ms: u32,
    peak_delta: u16,
    frame_count: u32,
}

impl Accumulator {
    fn begin(t_ms: u32, delta: u16) -> Self {
        Self {
            start_t_ms: t_ms,
            end_t_ms: t_ms,
            peak_delta: delta,
            frame_count: 1,
        }
    }

    fn extend(&mut self, t_ms: u32, delta: u16) {
        self.end_t_ms = t_ms;
        self.peak_delta = self.peak_delta.max(delta);
        self.frame_count += 1;
    }

    fn into_event(self, sensor_index: usize) -> TouchEvent {
        TouchEvent {
            sensor_index,
            region: RegionId::ALL[sensor_index],
            start_t_ms: self.start_t_ms,
            end_t_ms: self.end_t_ms,
            peak_delta: self.peak_delta,
            frame_count: self.frame_count,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
enum SensorPhase {
    #[default]
    Released,
    /// Touched run shorter than `debounce_on` so far.
    Pending(Accumulator),
    /// Event open; `released` counts the current untouched run.
    Open { acc: Accumulator, released: u32 },
}

/// Streaming debouncer: one state machine per sensor.
#[derive(Debug, Clone)]
pub struct Eventizer {
    config: DetectionConfig,
    sensors: [SensorPhase; SENSOR_COUNT],
    last_t_ms: Option<u32>,
}

impl Eventizer {
    pub fn new(config: DetectionConfig) -> Self {
        Self {
            config,
            sensors: [SensorPhase::Released; SENSOR_COUNT],
            last_t_ms: None,
        }
    }

    pub fn config(&self) -> &DetectionConfig {
        &self.config
    }

    /// Changes thresholds from the next frame on. Open events stay open.
    pub fn set_thresholds(&mut self, thresholds: Thresholds) {
        self.config.set_thresholds(thresholds);
    }

    /// True when the sensor currently has an open event.
    pub fn is_open(&self, sensor: usize) -> bool {
        matches!(self.sensors[sensor], SensorPhase::Open { .. })
    }

    /// Advances every sensor by one frame and returns events closed by it.
    pub fn push(&mut self, frame: &SensorFrame) -> Result<Vec<TouchEvent>, DetectError> {
        if let Some(previous) = self.last_t_ms {
            if frame.t_ms() < previous {
                return Err(DetectError::OutOfOrder {
                    previous,
                    t_ms: frame.t_ms(),
                });
            }
        }
        self.last_t_ms = Some(frame.t_ms());

        let touched = frame_touch_set(frame, &self.config);
        let (on, off) = (self.config.debounce_on(), self.config.debounce_off());
        let t = frame.t_ms();
        let mut closed = Vec::new();
        for (i, phase) in self.sensors.iter_mut().enumerate() {
            let delta = frame.delta(i);
            *phase = match (*phase, touched.contains(i)) {
                (SensorPhase::Released, false) => SensorPhase::Released,
                (SensorPhase::Released, true) => {
                    let acc = Accumulator::begin(t, delta);
                    if on == 1 {
                        SensorPhase::Open { acc, released: 0 }
                    } else {
                        SensorPhase::Pending(acc)
                    }
                }
                (SensorPhase::Pending(_), false) => SensorPhase::Released,
                (SensorPhase::Pending(mut acc), true) => {
                    acc.extend(t, delta);
                    if acc.frame_count >= on {
                        SensorPhase::Open { acc, released: 0 }
                    } else {
                        SensorPhase::Pending(acc)
                    }
                }
                (SensorPhase::Open { mut acc, .. }, true) => {
                    acc.extend(t, delta);
                    SensorPhase::Open { acc, released: 0 }
                }
                (SensorPhase::Open { acc, released }, false) => {
                    if released + 1 >= off {
                        closed.push(acc.into_event(i));
                        SensorPhase::Released
                    } else {
                        SensorPhase::Open {
                            acc,
                            released: released + 1,
                        }
                    }
                }
            };
        }
        Ok(closed)
    }

    /// Closes any open events at end of stream. Pending runs that never
    /// reached `debounce_on` are dropped.
    pub fn finish(&mut self) -> Vec<TouchEvent> {
        let mut closed = Vec::new();
        for (i, phase) in self.sensors.iter_mut().enumerate() {
            if let SensorPhase::Open { acc, .. } = *phase {
                closed.push(acc.into_event(i));
            }
            *phase = SensorPhase::Released;
        }
        closed
    }
}

/// Segments a whole frame stream into debounced touch events, in the order
/// they close.
pub fn eventize<'a, I>(frames: I, config: &DetectionConfig) -> Result<Vec<TouchEvent>, DetectError>
where
    I: IntoIterator<Item = &'a SensorFrame>,
{
    let mut eventizer = Eventizer::new(*config);
    let mut events = Vec::new();
    for frame in frames {
        events.extend(eventizer.push(frame)?);
    }
    events.extend(eventizer.finish());
    Ok(events)
}

/// Outcome of one labeled trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrialVerdict {
    pub detected: bool,
    /// Largest delta on the labeled sensor within the window, 0 for an empty window.
    pub peak_delta: u16,
}

/// Frame-level verdict on one sensor under threshold `threshold`, without
/// debounce.
pub fn sensor_verdict<'a, I>(frames: I, sensor: usize, threshold: u16) -> TrialVerdict
where
    I: IntoIterator<Item = &'a SensorFrame>,
{
    // Some frame is touched iff the peak reaches the threshold. An empty
    // window is never detected, even at threshold 0.
    let peak = frames.into_iter().map(|f| f.delta(sensor)).max();
    TrialVerdict {
        detected: peak.is_some_and(|p| p >= threshold),
        peak_delta: peak.unwrap_or(0),
    }
}

/// Verdict for a labeled trial window using the labeled region's sensor.
pub fn trial_verdict<'a, I>(
    frames: I,
    label: &TrialLabel,
    config: &DetectionConfig,
) -> Result<TrialVerdict, DetectError>
where
    I: IntoIterator<Item = &'a SensorFrame>,
{
    let region = label.region().ok_or(DetectError::Unlabeled)?;
    let sensor = region.sensor_index();
    Ok(sensor_verdict(frames, sensor, config.threshold(sensor)))
}

/// True iff some frame in the window touches the labeled sensor.
pub fn trial_detected<'a, I>(frames: I, label: &TrialLabel, config: &DetectionConfig) -> Result<bool, DetectError>
where
    I: IntoIterator<Item = &'a SensorFrame>,
{
    trial_verdict(frames, label, config).map(|v| v.detected)
}

/// Exact non-negative rational used as the calibration margin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Margin {
    numer: u64,
    denom: u64,
}

impl Margin {
    pub fn new(numer: u64, denom: u64) -> Result<Self, DetectError> {
        if denom == 0 {
            return Err(DetectError::Margin("zero denominator".into()));
        }
        if numer < denom {
            return Err(DetectError::Margin(format!("{numer}/{denom} is below 1")));
        }
        Ok(Self { numer, denom })
    }

    /// `ceil(self × value)`.
    fn scale_ceil(&self, value: u16) -> u64 {
        (self.numer * u64::from(value)).div_ceil(self.denom)
    }
}

impl fmt::Display for Margin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numer, self.denom)
    }
}

impl FromStr for Margin {
    type Err = DetectError;

    /// Accepts decimal notation (`2.25`) or a ratio (`9/4`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DetectError::Margin(s.to_string());
        let digits = |t: &str| -> Result<u64, DetectError> {
            if t.is_empty() || !t.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            t.parse().map_err(|_| bad())
        };
        if let Some((n, d)) = s.split_once('/') {
            return Margin::new(digits(n)?, digits(d)?);
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if frac.len() > 9 {
            return Err(bad());
        }
        let denom = 10u64.pow(frac.len() as u32);
        let int = digits(int)?;
        let frac = if frac.is_empty() { 0 } else { digits(frac)? };
        let numer = int
            .checked_mul(denom)
            .and_then(|v| v.checked_add(frac))
            .ok_or_else(bad)?;
        Margin::new(numer, denom)
    }
}

/// Per-sensor thresholds from idle data:
/// `T_i = max(1, ceil(margin × max_idle_delta_i) + 1)`, capped at 1023.
pub fn calibrate_thresholds<'a, I>(idle_frames: I, margin: Margin) -> Result<Thresholds, DetectError>
where
    I: IntoIterator<Item = &'a SensorFrame>,
{
    let mut max_delta: Option<Counts> = None;
    for frame in idle_frames {
        let acc = max_delta.get_or_insert([0; SENSOR_COUNT]);
        for (i, m) in acc.iter_mut().enumerate() {
            *m = (*m).max(frame.delta(i));
        }
    }
    let max_delta = max_delta.ok_or(DetectError::EmptyCalibration)?;
    let values: Counts = std::array::from_fn(|i| {
        let t = (margin.scale_ceil(max_delta[i]) + 1).clamp(1, u64::from(MAX_COUNT));
        t as u16
    });
    Ok(Thresholds::new(values).expect("calibrated thresholds are clamped into range"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GestureKind;

    /// Frame with B = 512 everywhere and F = 512 − delta_i.
    fn frame_with_deltas(t_ms: u32, deltas: &Counts) -> SensorFrame {
        let filtered = std::array::from_fn(|i| 512 - deltas[i]);
        SensorFrame::new(0, t_ms, filtered, [512; SENSOR_COUNT]).unwrap()
    }

    fn deltas_at(pairs: &[(usize, u16)]) -> Counts {
        let mut d = [0; SENSOR_COUNT];
        for &(i, v) in pairs {
            d[i] = v;
        }
        d
    }

    #[test]
    fn sensor_touched_examples() {
        assert!(!sensor_touched(512, 512, 10));
        assert!(sensor_touched(100, 110, 10));
        assert!(sensor_touched(200, 189, 10));
        assert!(!sensor_touched(200, 191, 10));
    }

    #[test]
    fn frame_touch_set_examples() {
        let cfg = DetectionConfig::default();
        let idle = frame_with_deltas(0, &[0; SENSOR_COUNT]);
        assert!(frame_touch_set(&idle, &cfg).is_empty());

        let frame = frame_with_deltas(0, &deltas_at(&[(2, 30), (5, 12)]));
        assert_eq!(frame_touch_set(&frame, &cfg), TouchSet::from_indices([2, 5]));

        let mut t = [10; SENSOR_COUNT];
        t[2] = 31;
        let cfg = DetectionConfig::with_thresholds(Thresholds::new(t).unwrap());
        assert_eq!(frame_touch_set(&frame, &cfg), TouchSet::from_indices([5]));
    }

    #[test]
    fn localize_examples() {
        let cfg = DetectionConfig::default();
        let frame = frame_with_deltas(0, &deltas_at(&[(2, 30), (5, 12)]));
        assert_eq!(localize(&frame, &cfg), Some(RegionId::RightCheek));

        let quiet = frame_with_deltas(0, &deltas_at(&[(3, 9)]));
        assert_eq!(localize(&quiet, &cfg), None);

        let tie = frame_with_deltas(0, &deltas_at(&[(1, 25), (4, 25)]));
        assert_eq!(localize(&tie, &cfg), Some(RegionId::LeftCheek));
    }

    #[test]
    fn touch_set_ops() {
        let a = TouchSet::from_indices([1, 3]);
        let b = TouchSet::from_indices([1, 3, 8]);
        assert!(a.is_subset(&b));
        assert!(!b.is_subset(&a));
        assert_eq!(b.len(), 3);
        assert_eq!(b.iter().collect::<Vec<_>>(), vec![1, 3, 8]);
        assert!(!b.contains(9));
    }

    fn flags_to_frames(flags: &[bool]) -> Vec<SensorFrame> {
        flags
            .iter()
            .enumerate()
            .map(|(k, &on)| frame_with_deltas(k as u32 * 110, &deltas_at(&[(0, if on { 20 } else { 0 })])))
            .collect()
    }

    #[test]
    fn eventize_examples() {
        let cfg = DetectionConfig::default();
        let frames = flags_to_frames(&[false, false, true, true, true, false, false]);
        let events = eventize(&frames, &cfg).unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].start_t_ms, 220);
        assert_eq!(events[0].end_t_ms, 440);
        assert_eq!(events[0].frame_count, 3);
        assert_eq!(events[0].peak_delta, 20);
        assert_eq!(events[0].region, RegionId::TopHead);

        let frames = flags_to_frames(&[false, true, false, false]);
        assert!(eventize(&frames, &cfg).unwrap().is_empty());

        let cfg1 = DetectionConfig::new(Thresholds::default(), 1, 1).unwrap();
        let frames = flags_to_frames(&[true, false, true]);
        assert_eq!(eventize(&frames, &cfg1).unwrap().len(), 2);
    }

    #[test]
    fn eventize_bridges_short_gaps() {
        let cfg = DetectionConfig::new(Thresholds::default(), 2, 3).unwrap();
        let frames = flags_to_frames(&[true, true, false, false, true, false, false, false]);
        let events = eventize(&frames, &cfg).unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].frame_count, 3);
        assert_eq!(events[0].end_t_ms, 440);
    }

    #[test]
    fn eventize_closes_at_stream_end() {
        let cfg = DetectionConfig::default();
        let frames = flags_to_frames(&[true, true, true, false]);
        let events = eventize(&frames, &cfg).unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].end_t_ms, 220);
    }

    #[test]
    fn eventize_rejects_time_going_backwards() {
        let frames = vec![frame_with_deltas(200, &[0; 9]), frame_with_deltas(100, &[0; 9])];
        assert_eq!(
            eventize(&frames, &DetectionConfig::default()),
            Err(DetectError::OutOfOrder {
                previous: 200,
                t_ms: 100
            })
        );
    }

    #[test]
    fn trial_detected_examples() {
        let cfg = DetectionConfig::default();
        let label = TrialLabel::trial(GestureKind::Poke, RegionId::TopHead, "p01").unwrap();
        let once = vec![
            frame_with_deltas(0, &[0; 9]),
            frame_with_deltas(110, &deltas_at(&[(0, 11)])),
            frame_with_deltas(220, &[0; 9]),
        ];
        assert!(trial_detected(&once, &label, &cfg).unwrap());

        let quiet = vec![frame_with_deltas(0, &[0; 9]); 3];
        assert!(!trial_detected(&quiet, &label, &cfg).unwrap());

        let elsewhere = vec![frame_with_deltas(0, &deltas_at(&[(4, 50)]))];
        assert!(!trial_detected(&elsewhere, &label, &cfg).unwrap());

        let idle = TrialLabel::idle("p01").unwrap();
        assert_eq!(trial_detected(&once, &idle, &cfg), Err(DetectError::Unlabeled));
    }

    #[test]
    fn trial_verdict_reports_peak() {
        let cfg = DetectionConfig::default();
        let label = TrialLabel::trial(GestureKind::Pat, RegionId::RightTrunk, "p01").unwrap();
        let frames = vec![
            frame_with_deltas(0, &deltas_at(&[(6, 7)])),
            frame_with_deltas(110, &deltas_at(&[(6, 9)])),
        ];
        let v = trial_verdict(&frames, &label, &cfg).unwrap();
        assert_eq!(
            v,
            TrialVerdict {
                detected: false,
                peak_delta: 9
            }
        );
        let empty: Vec<SensorFrame> = Vec::new();
        assert!(!trial_detected(&empty, &label, &cfg).unwrap());
    }

    #[test]
    fn margin_parsing() {
        assert_eq!("2.25".parse::<Margin>().unwrap(), Margin::new(225, 100).unwrap());
        assert_eq!("9/4".parse::<Margin>().unwrap(), Margin::new(9, 4).unwrap());
        assert_eq!("2".parse::<Margin>().unwrap(), Margin::new(2, 1).unwrap());
        assert!("0.5".parse::<Margin>().is_err());
        assert!("abc".parse::<Margin>().is_err());
        assert!("-2".parse::<Margin>().is_err());
        assert!("1/0".parse::<Margin>().is_err());
    }

    #[test]
    fn calibrate_examples() {
        let margin: Margin = "2.25".parse().unwrap();
        let frames = vec![
            frame_with_deltas(0, &[4; 9]),
            frame_with_deltas(110, &[1; 9]),
            frame_with_deltas(220, &[3; 9]),
        ];
        assert_eq!(calibrate_thresholds(&frames, margin).unwrap().values(), &[10; 9]);

        let zero = vec![frame_with_deltas(0, &[0; 9])];
        let t = calibrate_thresholds(&zero, Margin::new(2, 1).unwrap()).unwrap();
        assert_eq!(t.values(), &[1; 9]);

        let per_sensor = vec![
            frame_with_deltas(0, &deltas_at(&[(0, 4), (1, 2)])),
            frame_with_deltas(110, &deltas_at(&[(0, 1), (1, 8)])),
        ];
        let t = calibrate_thresholds(&per_sensor, Margin::new(1, 1).unwrap()).unwrap();
        assert_eq!(t.get(0), 5);
        assert_eq!(t.get(1), 9);
        assert_eq!(t.get(2), 1);

        let empty: Vec<SensorFrame> = Vec::new();
        assert_eq!(calibrate_thresholds(&empty, margin), Err(DetectError::EmptyCalibration));
    }

    #[test]
    fn calibrate_caps_at_max_count() {
        let frames = vec![frame_with_deltas(0, &[500; 9])];
        let t = calibrate_thresholds(&frames, Margin::new(3, 1).unwrap()).unwrap();
        assert_eq!(t.values(), &[MAX_COUNT; 9]);
    }
}
