//! Shared domain types: frames, regions, labels, detection configuration and
//! the fixed nine-region topology of the skin.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of electrodes on the skin.
pub const SENSOR_COUNT: usize = 9;

/// Largest count the capacitive front-end reports (10-bit).
pub const MAX_COUNT: u16 = 1023;

/// Threshold used by the original study.
pub const DEFAULT_THRESHOLD: u16 = 10;

/// Per-sensor counts, indexed by sensor.
pub type Counts = [u16; SENSOR_COUNT];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("sensor index {0} out of range 0..{SENSOR_COUNT}")]
    SensorIndex(usize),
    #[error("{field}[{index}] = {value} exceeds {MAX_COUNT}")]
    CountRange {
        field: &'static str,
        index: usize,
        value: u16,
    },
    #[error("threshold for sensor {index} is {value}, must be in 1..={MAX_COUNT}")]
    ThresholdRange { index: usize, value: u16 },
    #[error("debounce counts must be at least 1")]
    Debounce,
    #[error("expected {SENSOR_COUNT} values, got {0}")]
    Arity(usize),
    #[error("unknown region token `{0}`")]
    RegionToken(String),
    #[error("unknown gesture token `{0}`")]
    GestureToken(String),
    #[error("gesture `{gesture}` is inconsistent with region `{region}`")]
    LabelMismatch { gesture: String, region: String },
    #[error("invalid participant id `{0}`")]
    Participant(String),
}

/// One sample of the skin: filtered (F) and baseline (B) counts per sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct SensorFrame {
    seq: u16,
    t_ms: u32,
    filtered: Counts,
    baseline: Counts,
}

impl SensorFrame {
    pub fn new(seq: u16, t_ms: u32, filtered: Counts, baseline: Counts) -> Result<Self, ModelError> {
        check_counts("filtered", &filtered)?;
        check_counts("baseline", &baseline)?;
        Ok(Self {
            seq,
            t_ms,
            filtered,
            baseline,
        })
    }

    pub fn seq(&self) -> u16 {
        self.seq
    }

    pub fn t_ms(&self) -> u32 {
        self.t_ms
    }

    pub fn filtered(&self) -> &Counts {
        &self.filtered
    }

    pub fn baseline(&self) -> &Counts {
        &self.baseline
    }

    /// |B_i − F_i| for one sensor.
    ///
    /// Panics if `sensor >= SENSOR_COUNT`.
    pub fn delta(&self, sensor: usize) -> u16 {
        self.baseline[sensor].abs_diff(self.filtered[sensor])
    }

    pub fn deltas(&self) -> Counts {
        std::array::from_fn(|i| self.delta(i))
    }
}

fn check_counts(field: &'static str, counts: &Counts) -> Result<(), ModelError> {
    match counts.iter().position(|&c| c > MAX_COUNT) {
        Some(index) => Err(ModelError::CountRange {
            field,
            index,
            value: counts[index],
        }),
        None => Ok(()),
    }
}

/// The nine sensorized regions. The discriminant is the sensor index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionId {
    TopHead = 0,
    LeftCheek = 1,
    RightCheek = 2,
    LeftHead = 3,
    RightHead = 4,
    LeftTrunk = 5,
    RightTrunk = 6,
    FrontTrunk = 7,
    BackTrunk = 8,
}

impl RegionId {
    /// All regions in sensor-index order.
    pub const ALL: [RegionId; SENSOR_COUNT] = [
        RegionId::TopHead,
        RegionId::LeftCheek,
        RegionId::RightCheek,
        RegionId::LeftHead,
        RegionId::RightHead,
        RegionId::LeftTrunk,
        RegionId::RightTrunk,
        RegionId::FrontTrunk,
        RegionId::BackTrunk,
    ];

    pub fn sensor_index(self) -> usize {
        self as usize
    }

    pub fn from_sensor_index(index: usize) -> Result<Self, ModelError> {
        Self::ALL.get(index).copied().ok_or(ModelError::SensorIndex(index))
    }

    pub fn token(self) -> &'static str {
        match self {
            RegionId::TopHead => "top_head",
            RegionId::LeftCheek => "left_cheek",
            RegionId::RightCheek => "right_cheek",
            RegionId::LeftHead => "left_head",
            RegionId::RightHead => "right_head",
            RegionId::LeftTrunk => "left_trunk",
            RegionId::RightTrunk => "right_trunk",
            RegionId::FrontTrunk => "front_trunk",
            RegionId::BackTrunk => "back_trunk",
        }
    }
}

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for RegionId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|r| r.token() == s)
            .ok_or_else(|| ModelError::RegionToken(s.to_string()))
    }
}

/// Maps a sensor index to its region.
pub fn region_of(sensor_index: usize) -> Result<RegionId, ModelError> {
    RegionId::from_sensor_index(sensor_index)
}

/// Token used for "no region" in CSV files and the service API.
pub const NO_REGION_TOKEN: &str = "none";

/// Formats an optional region as its token, `none` when absent.
pub fn region_token(region: Option<RegionId>) -> &'static str {
    region.map_or(NO_REGION_TOKEN, RegionId::token)
}

/// Parses a region token, accepting `none`.
pub fn parse_region_token(s: &str) -> Result<Option<RegionId>, ModelError> {
    if s == NO_REGION_TOKEN {
        Ok(None)
    } else {
        s.parse().map(Some)
    }
}

/// Symmetric, irreflexive adjacency over regions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionTopology {
    adjacent: [[bool; SENSOR_COUNT]; SENSOR_COUNT],
}

impl RegionTopology {
    /// Builds a topology from an edge list. Self-loops are rejected by
    /// returning `None`.
    pub fn from_edges(edges: &[(RegionId, RegionId)]) -> Option<Self> {
        let mut adjacent = [[false; SENSOR_COUNT]; SENSOR_COUNT];
        for &(a, b) in edges {
            if a == b {
                return None;
            }
            adjacent[a.sensor_index()][b.sensor_index()] = true;
            adjacent[b.sensor_index()][a.sensor_index()] = true;
        }
        Some(Self { adjacent })
    }

    pub fn are_adjacent(&self, a: RegionId, b: RegionId) -> bool {
        self.adjacent[a.sensor_index()][b.sensor_index()]
    }

    pub fn neighbors(&self, region: RegionId) -> impl Iterator<Item = RegionId> + '_ {
        RegionId::ALL
            .into_iter()
            .filter(move |&other| self.are_adjacent(region, other))
    }

    /// All adjacent ordered pairs.
    pub fn pairs(&self) -> impl Iterator<Item = (RegionId, RegionId)> + '_ {
        RegionId::ALL
            .into_iter()
            .flat_map(move |a| self.neighbors(a).map(move |b| (a, b)))
    }

    /// True when every consecutive pair in `path` is adjacent.
    pub fn is_path(&self, path: &[RegionId]) -> bool {
        path.windows(2).all(|w| self.are_adjacent(w[0], w[1]))
    }

    pub fn reachable_from(&self, start: RegionId) -> Vec<RegionId> {
        let mut seen = [false; SENSOR_COUNT];
        let mut order = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen[start.sensor_index()] = true;
        while let Some(region) = queue.pop_front() {
            order.push(region);
            for next in self.neighbors(region) {
                if !seen[next.sensor_index()] {
                    seen[next.sensor_index()] = true;
                    queue.push_back(next);
                }
            }
        }
        order
    }

    pub fn is_connected(&self) -> bool {
        self.reachable_from(RegionId::TopHead).len() == SENSOR_COUNT
    }
}

/// The fixed adjacency of the skin's nine regions.
pub fn canonical_topology() -> RegionTopology {
    use RegionId::*;
    RegionTopology::from_edges(&[
        (TopHead, LeftCheek),
        (TopHead, RightCheek),
        (TopHead, LeftHead),
        (TopHead, RightHead),
        (LeftCheek, LeftHead),
        (RightCheek, RightHead),
        (LeftHead, BackTrunk),
        (RightHead, BackTrunk),
        (LeftCheek, FrontTrunk),
        (RightCheek, FrontTrunk),
        (LeftTrunk, FrontTrunk),
        (LeftTrunk, BackTrunk),
        (RightTrunk, FrontTrunk),
        (RightTrunk, BackTrunk),
    ])
    .expect("canonical edge list has no self-loops")
}

/// Per-sensor detection thresholds, each in `1..=1023`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct Thresholds(Counts);

impl Thresholds {
    pub fn new(values: Counts) -> Result<Self, ModelError> {
        match values.iter().position(|&t| !(1..=MAX_COUNT).contains(&t)) {
            Some(index) => Err(ModelError::ThresholdRange {
                index,
                value: values[index],
            }),
            None => Ok(Self(values)),
        }
    }

    pub fn from_slice(values: &[u16]) -> Result<Self, ModelError> {
        let values: Counts = values.try_into().map_err(|_| ModelError::Arity(values.len()))?;
        Self::new(values)
    }

    pub fn uniform(value: u16) -> Result<Self, ModelError> {
        Self::new([value; SENSOR_COUNT])
    }

    pub fn get(&self, sensor: usize) -> u16 {
        self.0[sensor]
    }

    pub fn values(&self) -> &Counts {
        &self.0
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        Self([DEFAULT_THRESHOLD; SENSOR_COUNT])
    }
}

impl<'de> Deserialize<'de> for Thresholds {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let values = Vec::<u16>::deserialize(deserializer)?;
        Thresholds::from_slice(&values).map_err(serde::de::Error::custom)
    }
}

/// Thresholds plus debounce parameters for event segmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DetectionConfig {
    thresholds: Thresholds,
    debounce_on: u32,
    debounce_off: u32,
}

impl DetectionConfig {
    pub const DEFAULT_DEBOUNCE: u32 = 2;

    pub fn new(thresholds: Thresholds, debounce_on: u32, debounce_off: u32) -> Result<Self, ModelError> {
        if debounce_on == 0 || debounce_off == 0 {
            return Err(ModelError::Debounce);
        }
        Ok(Self {
            thresholds,
            debounce_on,
            debounce_off,
        })
    }

    /// Same threshold on every sensor, default debounce.
    pub fn uniform(threshold: u16) -> Result<Self, ModelError> {
        Ok(Self::with_thresholds(Thresholds::uniform(threshold)?))
    }

    pub fn with_thresholds(thresholds: Thresholds) -> Self {
        Self {
            thresholds,
            ..Self::default()
        }
    }

    pub fn thresholds(&self) -> &Thresholds {
        &self.thresholds
    }

    pub fn threshold(&self, sensor: usize) -> u16 {
        self.thresholds.get(sensor)
    }

    pub fn debounce_on(&self) -> u32 {
        self.debounce_on
    }

    pub fn debounce_off(&self) -> u32 {
        self.debounce_off
    }

    pub fn set_thresholds(&mut self, thresholds: Thresholds) {
        self.thresholds = thresholds;
    }
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            thresholds: Thresholds::default(),
            debounce_on: Self::DEFAULT_DEBOUNCE,
            debounce_off: Self::DEFAULT_DEBOUNCE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GestureKind {
    Contact,
    Stroke,
    Pat,
    Scratch,
    Poke,
    /// Unlabeled or idle frames.
    None,
}

impl GestureKind {
    /// The five study gestures, in the order they were performed.
    pub const STUDY: [GestureKind; 5] = [
        GestureKind::Contact,
        GestureKind::Stroke,
        GestureKind::Pat,
        GestureKind::Scratch,
        GestureKind::Poke,
    ];

    pub const ALL: [GestureKind; 6] = [
        GestureKind::Contact,
        GestureKind::Stroke,
        GestureKind::Pat,
        GestureKind::Scratch,
        GestureKind::Poke,
        GestureKind::None,
    ];

    pub fn token(self) -> &'static str {
        match self {
            GestureKind::Contact => "contact",
            GestureKind::Stroke => "stroke",
            GestureKind::Pat => "pat",
            GestureKind::Scratch => "scratch",
            GestureKind::Poke => "poke",
            GestureKind::None => "none",
        }
    }

    pub fn is_none(self) -> bool {
        self == GestureKind::None
    }
}

impl fmt::Display for GestureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for GestureKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|g| g.token() == s)
            .ok_or_else(|| ModelError::GestureToken(s.to_string()))
    }
}

/// Participant ids end up unquoted in CSV rows, so separators are not allowed.
pub fn validate_participant(id: &str) -> Result<(), ModelError> {
    if id.is_empty() || id.chars().any(|c| matches!(c, ',' | '"' | '\r' | '\n')) {
        return Err(ModelError::Participant(id.to_string()));
    }
    Ok(())
}

/// Gesture, location and participant attached to a frame.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct TrialLabel {
    gesture: GestureKind,
    region: Option<RegionId>,
    participant: String,
}

impl TrialLabel {
    pub fn new(
        gesture: GestureKind,
        region: Option<RegionId>,
        participant: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let participant = participant.into();
        validate_participant(&participant)?;
        if gesture.is_none() != region.is_none() {
            return Err(ModelError::LabelMismatch {
                gesture: gesture.token().to_string(),
                region: region_token(region).to_string(),
            });
        }
        Ok(Self {
            gesture,
            region,
            participant,
        })
    }

    /// A labeled gesture on one region.
    pub fn trial(gesture: GestureKind, region: RegionId, participant: impl Into<String>) -> Result<Self, ModelError> {
        Self::new(gesture, Some(region), participant)
    }

    /// The `none`/`none` label.
    pub fn idle(participant: impl Into<String>) -> Result<Self, ModelError> {
        Self::new(GestureKind::None, None, participant)
    }

    pub fn gesture(&self) -> GestureKind {
        self.gesture
    }

    pub fn region(&self) -> Option<RegionId> {
        self.region
    }

    pub fn participant(&self) -> &str {
        &self.participant
    }

    pub fn is_idle(&self) -> bool {
        self.gesture.is_none()
    }
}
