//! Device simulator: synthesizes the five study gestures as frame streams,
//! with a baseline tracker that holds during touch and rounded Gaussian
//! noise on the filtered counts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Deserialize;
use thiserror::Error;

use crate::model::{
    canonical_topology, Counts, GestureKind, ModelError, RegionId, RegionTopology, SensorFrame, TrialLabel,
    DEFAULT_THRESHOLD, MAX_COUNT, SENSOR_COUNT,
};
use crate::session::SessionLog;
use crate::wire::{encode_frame, FRAME_LEN};

/// Idle frames inserted before every trial.
pub const IDLE_GAP_FRAMES: usize = 10;

/// Nominal frame period, ≈ 1/9.1 s.
pub const FRAME_PERIOD_MS: u32 = 110;

/// Default coupling of the cheek sensors relative to the rest of the skin.
pub const CHEEK_GAIN: f64 = 0.35;

/// Regions evaluated in the study: trunk side, cheek, top of head.
pub const STUDY_REGIONS: [RegionId; 3] = [RegionId::RightTrunk, RegionId::RightCheek, RegionId::TopHead];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulator parameter: {0}")]
    Params(String),
    #[error("invalid gesture script: {0}")]
    Script(String),
    #[error("simulation plan is empty")]
    EmptyPlan,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    pub frame_period_ms: u32,
    /// Peak delta of a gesture before region gain, in counts.
    pub amplitude: u16,
    /// Per-sensor coupling multiplier in `[0, 1]`.
    pub region_gain: [f64; SENSOR_COUNT],
    pub noise_sigma: f64,
    pub rest_level: u16,
    /// Baseline tracks the filtered value only while the delta is within this band.
    pub hold_band: u16,
    pub seed: u64,
}

impl SimParams {
    /// All region gains set to 1.
    pub fn uniform_gain(mut self) -> Self {
        self.region_gain = [1.0; SENSOR_COUNT];
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Params(m));
        if self.frame_period_ms == 0 {
            return bad("frame_period_ms must be positive".into());
        }
        if self.amplitude > MAX_COUNT {
            return bad(format!("amplitude {} exceeds {MAX_COUNT}", self.amplitude));
        }
        if let Some(g) = self.region_gain.iter().find(|g| !(0.0..=1.0).contains(*g)) {
            return bad(format!("region gain {g} outside [0, 1]"));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return bad(format!(
                "noise_sigma {} must be finite and non-negative",
                self.noise_sigma
            ));
        }
        if self.rest_level > MAX_COUNT {
            return bad(format!("rest_level {} exceeds {MAX_COUNT}", self.rest_level));
        }
        Ok(())
    }
}

impl Default for SimParams {
    fn default() -> Self {
        let mut region_gain = [1.0; SENSOR_COUNT];
        region_gain[RegionId::LeftCheek.sensor_index()] = CHEEK_GAIN;
        region_gain[RegionId::RightCheek.sensor_index()] = CHEEK_GAIN;
        Self {
            frame_period_ms: FRAME_PERIOD_MS,
            amplitude: 40,
            region_gain,
            noise_sigma: 0.0,
            rest_level: 512,
            hold_band: DEFAULT_THRESHOLD / 2,
            seed: 0,
        }
    }
}

/// Host-side model of the front-end's baseline tracking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaselineState {
    pub baseline: Counts,
    pub hold_band: u16,
}

impl BaselineState {
    pub fn new(baseline: Counts, hold_band: u16) -> Result<Self, SimError> {
        if baseline.iter().any(|&b| b > MAX_COUNT) {
            return Err(SimError::Params("baseline count exceeds 1023".into()));
        }
        Ok(Self { baseline, hold_band })
    }

    /// Within the hold band the baseline moves one count toward the filtered
    /// value; outside it the baseline is frozen.
    pub fn step(&self, filtered: &Counts) -> Self {
        let baseline = std::array::from_fn(|i| {
            let (b, f) = (self.baseline[i], filtered[i]);
            if b.abs_diff(f) > self.hold_band {
                b
            } else if b < f {
                b + 1
            } else if b > f {
                b - 1
            } else {
                b
            }
        });
        Self {
            baseline,
            hold_band: self.hold_band,
        }
    }
}

/// Free-function form of [`BaselineState::step`].
pub fn baseline_step(state: &BaselineState, filtered: &Counts) -> BaselineState {
    state.step(filtered)
}

/// What to perform, where, and for how many frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GestureScript {
    pub gesture: GestureKind,
    pub region: RegionId,
    pub duration_frames: usize,
    /// Pulse length in frames for pat and poke.
    pub pulse_width: usize,
    /// Idle frames between pat pulses.
    pub pulse_gap: usize,
    /// Sensors a stroke travels over, in order; must contain `region`.
    pub stroke_path: Vec<RegionId>,
}

impl GestureScript {
    /// Default shape parameters for a gesture on one region.
    pub fn standard(gesture: GestureKind, region: RegionId) -> Self {
        let topo = canonical_topology();
        let (duration_frames, pulse_width, stroke_path) = match gesture {
            GestureKind::Contact => (8, 1, vec![]),
            GestureKind::Stroke => {
                let mut path = vec![region];
                path.extend(topo.neighbors(region).next());
                (2 * path.len() + 1, 1, path)
            }
            GestureKind::Pat => (12, 1, vec![]),
            GestureKind::Scratch => (10, 1, vec![]),
            GestureKind::Poke => (4, 2, vec![]),
            GestureKind::None => (1, 1, vec![]),
        };
        Self {
            gesture,
            region,
            duration_frames,
            pulse_width,
            pulse_gap: 3,
            stroke_path,
        }
    }

    pub fn with_duration(mut self, frames: usize) -> Self {
        self.duration_frames = frames;
        self
    }

    pub fn with_stroke_path(mut self, path: Vec<RegionId>) -> Self {
        self.stroke_path = path;
        self
    }

    /// Per-frame, per-sensor envelope in `[0, 1]`.
    pub fn envelope(&self, topology: &RegionTopology) -> Result<Vec<[f64; SENSOR_COUNT]>, SimError> {
        let d = self.duration_frames;
        if d == 0 {
            return Err(SimError::Script("duration_frames must be at least 1".into()));
        }
        let target = self.region.sensor_index();
        let mut env = vec![[0.0; SENSOR_COUNT]; d];
        let mut set = |k: usize, sensor: usize, v: f64| env[k][sensor] = v;
        match self.gesture {
            GestureKind::None => return Err(SimError::Script("cannot synthesize gesture `none`".into())),
            GestureKind::Contact => {
                for k in 0..d {
                    let ramp = d >= 3 && (k == 0 || k == d - 1);
                    set(k, target, if ramp { 0.5 } else { 1.0 });
                }
            }
            GestureKind::Pat => {
                if self.pulse_width == 0 {
                    return Err(SimError::Script("pulse_width must be at least 1".into()));
                }
                let period = self.pulse_width + self.pulse_gap;
                for k in (0..d).filter(|k| k % period < self.pulse_width) {
                    set(k, target, 1.0);
                }
            }
            GestureKind::Scratch => {
                for k in 0..d {
                    set(k, target, if k % 2 == 0 { 0.6 } else { 1.0 });
                }
            }
            GestureKind::Poke => {
                if self.pulse_width == 0 {
                    return Err(SimError::Script("pulse_width must be at least 1".into()));
                }
                for k in 0..d.min(self.pulse_width) {
                    set(k, target, 1.0);
                }
            }
            GestureKind::Stroke => {
                let path: &[RegionId] = if self.stroke_path.is_empty() {
                    std::slice::from_ref(&self.region)
                } else {
                    &self.stroke_path
                };
                if !path.contains(&self.region) {
                    return Err(SimError::Script(format!("stroke path does not visit {}", self.region)));
                }
                if !topology.is_path(path) {
                    return Err(SimError::Script("stroke path is not adjacency-connected".into()));
                }
                let m = path.len();
                if d < m + 2 {
                    return Err(SimError::Script(format!(
                        "stroke over {m} sensors needs at least {} frames, got {d}",
                        m + 2
                    )));
                }
                // Pulse centers span frames 1..=d-2.
                let step = if m > 1 { (d - 3) / (m - 1) } else { 0 };
                for (j, region) in path.iter().enumerate() {
                    let center = 1 + j * step;
                    let sensor = region.sensor_index();
                    for (k, w) in [(center - 1, 0.5), (center, 1.0), (center + 1, 0.5)] {
                        let slot = &mut env[k][sensor];
                        *slot = slot.max(w);
                    }
                }
            }
        }
        Ok(env)
    }
}

/// A simulated front-end: produces consecutive frames with evolving baseline,
/// sequence number and timestamp.
#[derive(Debug, Clone)]
pub struct DeviceSim {
    params: SimParams,
    topology: RegionTopology,
    baseline: BaselineState,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
    seq: u16,
    t_ms: u32,
}

impl DeviceSim {
    pub fn new(params: SimParams) -> Result<Self, SimError> {
        params.validate()?;
        let noise = (params.noise_sigma > 0.0).then(|| Normal::new(0.0, params.noise_sigma).expect("sigma validated"));
        Ok(Self {
            baseline: BaselineState::new([params.rest_level; SENSOR_COUNT], params.hold_band)?,
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            topology: canonical_topology(),
            noise,
            seq: 0,
            t_ms: 0,
            params,
        })
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    /// Emits one frame for the given envelope and advances the device.
    pub fn next_frame(&mut self, envelope: &[f64; SENSOR_COUNT]) -> SensorFrame {
        let p = &self.params;
        let filtered: Counts = std::array::from_fn(|i| {
            let delta = (f64::from(p.amplitude) * p.region_gain[i] * envelope[i]).round() as i32;
            let noise = self.noise.map_or(0, |n| n.sample(&mut self.rng).round() as i32);
            (i32::from(p.rest_level) - delta + noise).clamp(0, i32::from(MAX_COUNT)) as u16
        });
        let frame =
            SensorFrame::new(self.seq, self.t_ms, filtered, self.baseline.baseline).expect("counts clamped into range");
        self.baseline = self.baseline.step(&filtered);
        self.seq = self.seq.wrapping_add(1);
        self.t_ms = self.t_ms.saturating_add(p.frame_period_ms);
        frame
    }

    pub fn idle_frame(&mut self) -> SensorFrame {
        self.next_frame(&[0.0; SENSOR_COUNT])
    }

    pub fn gesture(&mut self, script: &GestureScript) -> Result<Vec<SensorFrame>, SimError> {
        let envelope = script.envelope(&self.topology)?;
        Ok(envelope.iter().map(|e| self.next_frame(e)).collect())
    }

    /// Next frame as wire bytes.
    pub fn next_wire_frame(&mut self, envelope: &[f64; SENSOR_COUNT]) -> [u8; FRAME_LEN] {
        encode_frame(&self.next_frame(envelope))
    }
}

/// Frames for one gesture from a freshly started device.
pub fn synth_gesture(script: &GestureScript, params: &SimParams) -> Result<Vec<SensorFrame>, SimError> {
    DeviceSim::new(params.clone())?.gesture(script)
}

/// One planned trial: its label and the script the simulated hand follows.
pub type PlanStep = (TrialLabel, GestureScript);

/// Runs a whole plan on one simulated device. Each trial is preceded by
/// [`IDLE_GAP_FRAMES`] idle frames labeled `none`.
pub fn run_session_sim(plan: &[PlanStep], params: &SimParams) -> Result<SessionLog, SimError> {
    if plan.is_empty() {
        return Err(SimError::EmptyPlan);
    }
    for (label, script) in plan {
        if label.gesture() != script.gesture || label.region() != Some(script.region) {
            return Err(SimError::Script(format!(
                "label {}/{} does not match script {}/{}",
                label.gesture(),
                crate::model::region_token(label.region()),
                script.gesture,
                script.region
            )));
        }
    }
    let mut device = DeviceSim::new(params.clone())?;
    let mut log = SessionLog::new(plan[0].0.participant()).expect("participant validated by TrialLabel");
    for (label, script) in plan {
        let idle = TrialLabel::idle(label.participant())?;
        for _ in 0..IDLE_GAP_FRAMES {
            push(&mut log, device.idle_frame(), idle.clone());
        }
        for frame in device.gesture(script)? {
            push(&mut log, frame, label.clone());
        }
    }
    Ok(log)
}

/// An idle-only recording of `frames` frames.
pub fn run_idle_sim(frames: usize, participant: &str, params: &SimParams) -> Result<SessionLog, SimError> {
    let idle = TrialLabel::idle(participant)?;
    let mut device = DeviceSim::new(params.clone())?;
    let mut log = SessionLog::new(participant).expect("participant validated by TrialLabel");
    for _ in 0..frames {
        push(&mut log, device.idle_frame(), idle.clone());
    }
    Ok(log)
}

fn push(log: &mut SessionLog, frame: SensorFrame, label: TrialLabel) {
    log.push(frame, label).expect("simulated time is monotonic");
}

/// Participant id for the `n`-th (1-based) synthetic participant.
pub fn participant_id(n: usize) -> String {
    format!("p{n:02}")
}

/// Every participant performs the five gestures in order on each region in turn.
pub fn standard_study_plan(participants: usize, regions: &[RegionId]) -> Vec<PlanStep> {
    let mut plan = Vec::with_capacity(participants * regions.len() * GestureKind::STUDY.len());
    for p in 1..=participants {
        let id = participant_id(p);
        for &region in regions {
            for gesture in GestureKind::STUDY {
                let label = TrialLabel::trial(gesture, region, &id).expect("generated ids are valid");
                plan.push((label, GestureScript::standard(gesture, region)));
            }
        }
    }
    plan
}

/// Serialized plan as read from a plan file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSpec {
    #[serde(default)]
    pub params: SimParams,
    /// Expands to [`standard_study_plan`], placed before `trials`.
    #[serde(default)]
    pub study: Option<StudySpec>,
    #[serde(default)]
    pub trials: Vec<PlannedTrial>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySpec {
    pub participants: usize,
    #[serde(default = "default_study_regions")]
    pub regions: Vec<RegionId>,
}

fn default_study_regions() -> Vec<RegionId> {
    STUDY_REGIONS.to_vec()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannedTrial {
    pub participant: String,
    pub gesture: GestureKind,
    pub region: RegionId,
    #[serde(default)]
    pub duration_frames: Option<usize>,
    #[serde(default)]
    pub stroke_path: Option<Vec<RegionId>>,
}

impl PlanSpec {
    pub fn steps(&self) -> Result<Vec<PlanStep>, SimError> {
        let mut steps = match &self.study {
            Some(study) => standard_study_plan(study.participants, &study.regions),
            None => Vec::new(),
        };
        for t in &self.trials {
            let label = TrialLabel::trial(t.gesture, t.region, &t.participant)?;
            let mut script = GestureScript::standard(t.gesture, t.region);
            if let Some(path) = &t.stroke_path {
                script = script.with_stroke_path(path.clone());
                if t.duration_frames.is_none() {
                    script = script.with_duration(2 * path.len() + 1);
                }
            }
            if let Some(d) = t.duration_frames {
                script = script.with_duration(d);
            }
            steps.push((label, script));
        }
        Ok(steps)
    }
}
