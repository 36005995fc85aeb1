//! Live session state machine. One [`LiveSession`] owns all mutable state of
//! a capture: decoding, detection, trial labeling and recording happen in
//! [`LiveSession::ingest_frame`], and operator commands are applied between
//! frames.

use serde::Serialize;
use thiserror::Error;

use tactile_core::detect::{frame_touch_set, localize, trial_verdict, Eventizer, TouchEvent, TouchSet, TrialVerdict};
use tactile_core::model::{Counts, DetectionConfig, GestureKind, RegionId, SensorFrame, Thresholds, TrialLabel};
use tactile_core::session::SessionLog;
use tactile_core::wire::{DecodeDiagnostics, StreamDecoder};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ServiceError {
    /// Command not valid in the current phase.
    #[error("{0}")]
    State(String),
    /// Command arguments out of range.
    #[error("{0}")]
    Domain(String),
    /// The session log could not be written.
    #[error("{0}")]
    Storage(String),
    /// The capture task has shut down.
    #[error("capture task is not running")]
    Unavailable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    SessionOpen,
    TrialRunning,
}

/// Exponential moving average of inter-frame intervals on device time.
#[derive(Debug, Clone, Default)]
struct RateEstimator {
    last_t_ms: Option<u32>,
    mean_interval_ms: Option<f64>,
}

impl RateEstimator {
    const ALPHA: f64 = 0.25;

    fn observe(&mut self, t_ms: u32) {
        if let Some(last) = self.last_t_ms {
            let dt = f64::from(t_ms.saturating_sub(last));
            if dt > 0.0 {
                self.mean_interval_ms = Some(match self.mean_interval_ms {
                    Some(m) => m + Self::ALPHA * (dt - m),
                    None => dt,
                });
            }
        }
        self.last_t_ms = Some(t_ms);
    }

    fn hz(&self) -> Option<f64> {
        self.mean_interval_ms.map(|m| 1000.0 / m)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FrameState {
    pub seq: u16,
    pub t_ms: u32,
    pub filtered: Counts,
    pub baseline: Counts,
    pub deltas: Counts,
}

impl From<&SensorFrame> for FrameState {
    fn from(f: &SensorFrame) -> Self {
        Self {
            seq: f.seq(),
            t_ms: f.t_ms(),
            filtered: *f.filtered(),
            baseline: *f.baseline(),
            deltas: f.deltas(),
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct ActiveTrial {
    pub gesture: GestureKind,
    pub region: RegionId,
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct TrialRecord {
    pub participant: String,
    pub gesture: GestureKind,
    pub region: RegionId,
    pub frames: usize,
    pub detected: bool,
    pub peak_delta: u16,
}

/// Consistent view of the session after the latest ingest step.
#[derive(Debug, Clone, Serialize)]
pub struct SessionState {
    pub phase: Phase,
    pub participant: Option<String>,
    pub trial: Option<ActiveTrial>,
    pub thresholds: Thresholds,
    pub debounce_on: u32,
    pub debounce_off: u32,
    pub latest_frame: Option<FrameState>,
    pub touch_set: TouchSet,
    pub localization: Option<RegionId>,
    pub diagnostics: DecodeDiagnostics,
    /// Frames dropped because their timestamp went backwards.
    pub out_of_order_frames: u64,
    pub frame_rate_hz: Option<f64>,
    pub frames_recorded: usize,
    pub trials: Vec<TrialRecord>,
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum TrialMarker {
    Start,
    Stop,
}

/// Messages pushed to subscribers.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LiveEvent {
    Frame {
        seq: u16,
        t_ms: u32,
        deltas: Counts,
        touch_set: TouchSet,
        localization: Option<RegionId>,
        frame_rate_hz: Option<f64>,
        diagnostics: DecodeDiagnostics,
    },
    Touch {
        #[serde(flatten)]
        event: TouchEvent,
    },
    Trial {
        marker: TrialMarker,
        gesture: GestureKind,
        region: RegionId,
        #[serde(skip_serializing_if = "Option::is_none")]
        detected: Option<bool>,
        #[serde(skip_serializing_if = "Option::is_none")]
        peak_delta: Option<u16>,
    },
}

#[derive(Debug, Clone)]
struct Recording {
    log: SessionLog,
    trial: Option<(TrialLabel, usize)>,
    trials: Vec<TrialRecord>,
}

#[derive(Debug, Clone)]
pub struct LiveSession {
    config: DetectionConfig,
    eventizer: Eventizer,
    decoder: StreamDecoder,
    rate: RateEstimator,
    recording: Option<Recording>,
    latest: Option<(SensorFrame, TouchSet, Option<RegionId>)>,
    last_t_ms: Option<u32>,
    out_of_order: u64,
}

impl LiveSession {
    pub fn new(config: DetectionConfig) -> Self {
        Self {
            config,
            eventizer: Eventizer::new(config),
            decoder: StreamDecoder::new(),
            rate: RateEstimator::default(),
            recording: None,
            latest: None,
            last_t_ms: None,
            out_of_order: 0,
        }
    }

    pub fn config(&self) -> &DetectionConfig {
        &self.config
    }

    pub fn phase(&self) -> Phase {
        match &self.recording {
            None => Phase::Idle,
            Some(Recording { trial: None, .. }) => Phase::SessionOpen,
            Some(Recording { trial: Some(_), .. }) => Phase::TrialRunning,
        }
    }

    pub fn start_session(&mut self, participant: &str) -> Result<(), ServiceError> {
        if self.recording.is_some() {
            return Err(ServiceError::State("a session is already open".into()));
        }
        let log = SessionLog::new(participant).map_err(|e| ServiceError::Domain(e.to_string()))?;
        self.recording = Some(Recording {
            log,
            trial: None,
            trials: Vec::new(),
        });
        Ok(())
    }

    /// Log of the open session, if any.
    pub fn log(&self) -> Option<&SessionLog> {
        self.recording.as_ref().map(|r| &r.log)
    }

    /// Closes the session and hands back its log.
    pub fn stop_session(&mut self) -> Result<SessionLog, ServiceError> {
        match self.phase() {
            Phase::Idle => Err(ServiceError::State("no session is open".into())),
            Phase::TrialRunning => Err(ServiceError::State("stop the running trial first".into())),
            Phase::SessionOpen => Ok(self.recording.take().expect("session open").log),
        }
    }

    pub fn start_trial(&mut self, gesture: GestureKind, region: RegionId) -> Result<LiveEvent, ServiceError> {
        let rec = match self.phase() {
            Phase::SessionOpen => self.recording.as_mut().expect("session open"),
            Phase::Idle => return Err(ServiceError::State("no session is open".into())),
            Phase::TrialRunning => return Err(ServiceError::State("a trial is already running".into())),
        };
        if gesture.is_none() {
            return Err(ServiceError::Domain("trial gesture cannot be `none`".into()));
        }
        let label = TrialLabel::trial(gesture, region, rec.log.participant())
            .map_err(|e| ServiceError::Domain(e.to_string()))?;
        rec.trial = Some((label, rec.log.len()));
        Ok(LiveEvent::Trial {
            marker: TrialMarker::Start,
            gesture,
            region,
            detected: None,
            peak_delta: None,
        })
    }

    /// Ends the running trial and returns its verdict under the current config.
    pub fn stop_trial(&mut self) -> Result<(TrialVerdict, LiveEvent), ServiceError> {
        if self.phase() != Phase::TrialRunning {
            return Err(ServiceError::State("no trial is running".into()));
        }
        let rec = self.recording.as_mut().expect("trial running");
        let (label, first_row) = rec.trial.take().expect("trial running");
        let rows = &rec.log.rows()[first_row..];
        let verdict =
            trial_verdict(rows.iter().map(|r| &r.frame), &label, &self.config).expect("trial label has a region");
        let region = label.region().expect("trial label has a region");
        rec.trials.push(TrialRecord {
            participant: label.participant().to_string(),
            gesture: label.gesture(),
            region,
            frames: rows.len(),
            detected: verdict.detected,
            peak_delta: verdict.peak_delta,
        });
        let event = LiveEvent::Trial {
            marker: TrialMarker::Stop,
            gesture: label.gesture(),
            region,
            detected: Some(verdict.detected),
            peak_delta: Some(verdict.peak_delta),
        };
        Ok((verdict, event))
    }

    /// New thresholds take effect from the next ingested frame.
    pub fn set_thresholds(&mut self, values: &[i64]) -> Result<Thresholds, ServiceError> {
        let values: Vec<u16> = values
            .iter()
            .map(|&v| {
                u16::try_from(v).map_err(|_| ServiceError::Domain(format!("threshold {v} out of range 1..=1023")))
            })
            .collect::<Result<_, _>>()?;
        let thresholds = Thresholds::from_slice(&values).map_err(|e| ServiceError::Domain(e.to_string()))?;
        self.config.set_thresholds(thresholds);
        self.eventizer.set_thresholds(thresholds);
        Ok(thresholds)
    }

    /// Decodes a chunk of device bytes and ingests every completed frame.
    pub fn ingest_bytes(&mut self, chunk: &[u8]) -> Vec<LiveEvent> {
        let frames = self.decoder.push(chunk);
        frames.iter().flat_map(|f| self.ingest_frame(*f)).collect()
    }

    /// The single ingest step: detect, record, then report.
    pub fn ingest_frame(&mut self, frame: SensorFrame) -> Vec<LiveEvent> {
        if self.last_t_ms.is_some_and(|last| frame.t_ms() < last) {
            self.out_of_order += 1;
            return Vec::new();
        }
        self.last_t_ms = Some(frame.t_ms());
        self.rate.observe(frame.t_ms());

        let touch_set = frame_touch_set(&frame, &self.config);
        let localization = localize(&frame, &self.config);
        let closed = self.eventizer.push(&frame).expect("timestamps checked above");

        if let Some(rec) = &mut self.recording {
            let label = match &rec.trial {
                Some((label, _)) => label.clone(),
                None => TrialLabel::idle(rec.log.participant()).expect("participant validated at session start"),
            };
            rec.log.push(frame, label).expect("timestamps checked above");
        }
        self.latest = Some((frame, touch_set, localization));

        let mut events = Vec::with_capacity(1 + closed.len());
        events.push(LiveEvent::Frame {
            seq: frame.seq(),
            t_ms: frame.t_ms(),
            deltas: frame.deltas(),
            touch_set,
            localization,
            frame_rate_hz: self.rate.hz(),
            diagnostics: self.decoder.diagnostics(),
        });
        events.extend(closed.into_iter().map(|event| LiveEvent::Touch { event }));
        events
    }

    pub fn snapshot(&self) -> SessionState {
        let (participant, trial, frames_recorded, trials) = match &self.recording {
            Some(rec) => (
                Some(rec.log.participant().to_string()),
                rec.trial.as_ref().map(|(l, _)| ActiveTrial {
                    gesture: l.gesture(),
                    region: l.region().expect("trial label has a region"),
                }),
                rec.log.len(),
                rec.trials.clone(),
            ),
            None => (None, None, 0, Vec::new()),
        };
        SessionState {
            phase: self.phase(),
            participant,
            trial,
            thresholds: *self.config.thresholds(),
            debounce_on: self.config.debounce_on(),
            debounce_off: self.config.debounce_off(),
            latest_frame: self.latest.as_ref().map(|(f, _, _)| FrameState::from(f)),
            touch_set: self.latest.map_or(TouchSet::EMPTY, |(_, t, _)| t),
            localization: self.latest.and_then(|(_, _, l)| l),
            diagnostics: self.decoder.diagnostics(),
            out_of_order_frames: self.out_of_order,
            frame_rate_hz: self.rate.hz(),
            frames_recorded,
            trials,
        }
    }
}

impl Default for LiveSession {
    fn default() -> Self {
        Self::new(DetectionConfig::default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tactile_core::model::SENSOR_COUNT;
    use tactile_core::wire::encode_frame;

    fn frame(k: u32, deltas: &[(usize, u16)]) -> SensorFrame {
        let mut f = [512; SENSOR_COUNT];
        for &(i, d) in deltas {
            f[i] = 512 - d;
        }
        SensorFrame::new(k as u16, 110 * k, f, [512; SENSOR_COUNT]).unwrap()
    }

    #[test]
    fn session_lifecycle() {
        let mut s = LiveSession::default();
        assert_eq!(s.phase(), Phase::Idle);
        s.start_session("p01").unwrap();
        assert_eq!(s.phase(), Phase::SessionOpen);
        assert!(matches!(s.start_session("p01"), Err(ServiceError::State(_))));
        s.stop_session().unwrap();
        assert!(matches!(s.stop_session(), Err(ServiceError::State(_))));
        s.start_session("p02").unwrap();
        assert_eq!(s.snapshot().participant.as_deref(), Some("p02"));
        assert!(matches!(
            LiveSession::default().start_session("a,b"),
            Err(ServiceError::Domain(_))
        ));
    }

    #[test]
    fn trial_frames_are_labeled() {
        let mut s = LiveSession::default();
        s.start_session("p01").unwrap();
        s.ingest_frame(frame(0, &[]));
        s.start_trial(GestureKind::Poke, RegionId::TopHead).unwrap();
        for k in 1..=5 {
            s.ingest_frame(frame(k, &[(0, 30)]));
        }
        let (verdict, _) = s.stop_trial().unwrap();
        assert!(verdict.detected);
        assert_eq!(verdict.peak_delta, 30);
        s.ingest_frame(frame(6, &[]));
        let log = s.stop_session().unwrap();
        let labels: Vec<GestureKind> = log.rows().iter().map(|r| r.label.gesture()).collect();
        assert_eq!(labels[0], GestureKind::None);
        assert!(labels[1..6].iter().all(|&g| g == GestureKind::Poke));
        assert_eq!(labels[6], GestureKind::None);
        assert_eq!(log.trials().len(), 1);
    }

    #[test]
    fn trial_phase_errors() {
        let mut s = LiveSession::default();
        assert!(matches!(
            s.start_trial(GestureKind::Pat, RegionId::TopHead),
            Err(ServiceError::State(_))
        ));
        s.start_session("p01").unwrap();
        assert!(matches!(s.stop_trial(), Err(ServiceError::State(_))));
        assert!(matches!(
            s.start_trial(GestureKind::None, RegionId::TopHead),
            Err(ServiceError::Domain(_))
        ));
        s.start_trial(GestureKind::Pat, RegionId::TopHead).unwrap();
        assert!(matches!(
            s.start_trial(GestureKind::Pat, RegionId::TopHead),
            Err(ServiceError::State(_))
        ));
        assert!(matches!(s.stop_session(), Err(ServiceError::State(_))));
        let (verdict, _) = s.stop_trial().unwrap();
        assert_eq!(
            verdict,
            TrialVerdict {
                detected: false,
                peak_delta: 0
            }
        );
    }

    #[test]
    fn thresholds_validate_and_apply_from_next_frame() {
        let mut s = LiveSession::default();
        assert_eq!(s.set_thresholds(&[10; 9]).unwrap().values(), &[10; 9]);
        assert!(matches!(s.set_thresholds(&[0; 9]), Err(ServiceError::Domain(_))));
        assert!(matches!(s.set_thresholds(&[10; 8]), Err(ServiceError::Domain(_))));
        assert!(matches!(
            s.set_thresholds(&[-4, 10, 10, 10, 10, 10, 10, 10, 10]),
            Err(ServiceError::Domain(_))
        ));
        assert_eq!(s.config().thresholds().values(), &[10; 9]);

        s.ingest_frame(frame(0, &[(2, 20)]));
        assert!(s.snapshot().touch_set.contains(2));
        s.set_thresholds(&[10, 10, 25, 10, 10, 10, 10, 10, 10]).unwrap();
        // Snapshot still reflects the frame ingested under the old config.
        assert!(s.snapshot().touch_set.contains(2));
        s.ingest_frame(frame(1, &[(2, 20)]));
        assert!(s.snapshot().touch_set.is_empty());
    }

    #[test]
    fn snapshot_before_and_after_frames() {
        let mut s = LiveSession::default();
        let snap = s.snapshot();
        assert!(snap.latest_frame.is_none());
        assert_eq!(snap.phase, Phase::Idle);
        assert!(snap.frame_rate_hz.is_none());

        s.ingest_frame(frame(0, &[(0, 30)]));
        let snap = s.snapshot();
        assert_eq!(snap.touch_set, TouchSet::from_indices([0]));
        assert_eq!(snap.localization, Some(RegionId::TopHead));
        assert_eq!(snap.latest_frame.unwrap().deltas[0], 30);
        assert_eq!(snap.frames_recorded, 0);
    }

    #[test]
    fn frame_rate_tracks_device_time() {
        let mut s = LiveSession::default();
        for k in 0..50 {
            s.ingest_frame(frame(k, &[]));
        }
        let hz = s.snapshot().frame_rate_hz.unwrap();
        assert!((hz - 9.1).abs() <= 0.2, "{hz}");
    }

    #[test]
    fn out_of_order_frames_are_dropped() {
        let mut s = LiveSession::default();
        s.start_session("p01").unwrap();
        s.ingest_frame(frame(5, &[]));
        assert!(s.ingest_frame(frame(2, &[])).is_empty());
        assert_eq!(s.snapshot().out_of_order_frames, 1);
        assert_eq!(s.snapshot().frames_recorded, 1);
    }

    #[test]
    fn bytes_path_emits_frame_and_touch_events() {
        let mut s = LiveSession::default();
        let mut bytes = vec![0x00, 0x01];
        for k in 0..6 {
            let d = if (1..=3).contains(&k) { 40 } else { 0 };
            bytes.extend_from_slice(&encode_frame(&frame(k, &[(4, d)])));
        }
        let events = s.ingest_bytes(&bytes);
        let frames = events.iter().filter(|e| matches!(e, LiveEvent::Frame { .. })).count();
        let touches: Vec<_> = events
            .iter()
            .filter_map(|e| match e {
                LiveEvent::Touch { event } => Some(*event),
                _ => None,
            })
            .collect();
        assert_eq!(frames, 6);
        assert_eq!(touches.len(), 1);
        assert_eq!(touches[0].region, RegionId::RightHead);
        assert_eq!(touches[0].frame_count, 3);
        assert_eq!(s.snapshot().diagnostics.bytes_skipped, 2);
    }
}
