//! Host-side toolkit for a nine-electrode capacitive tactile skin.
//!
//! * [`model`]: frames, regions, labels, detection configuration.
//! * [`wire`]: the 46-byte device frame codec and resyncing stream decoder.
//! * [`detect`]: touch classification, localization, debounced events,
//!   trial verdicts and threshold calibration.
//! * [`sim`]: a simulated front-end that synthesizes study gestures.
//! * [`session`]: labeled session logs and their CSV format.
//! * [`eval`]: detection-rate tables, threshold sweeps, false positives.
//! * [`fixture`]: sessions that realize given per-cell detection counts.

pub mod detect;
pub mod eval;
pub mod fixture;
pub mod model;
pub mod session;
pub mod sim;
pub mod wire;

pub use detect::{
    calibrate_thresholds, eventize, frame_touch_set, localize, sensor_touched, trial_detected, trial_verdict,
    DetectError, Eventizer, Margin, TouchEvent, TouchSet, TrialVerdict,
};
pub use eval::{detection_table, false_positive_rate, region_summary, threshold_sweep, EvalError, RateTable};
pub use model::{
    canonical_topology, region_of, DetectionConfig, GestureKind, ModelError, RegionId, RegionTopology, SensorFrame,
    Thresholds, TrialLabel, MAX_COUNT, SENSOR_COUNT,
};
pub use session::{read_csv, replay, write_csv, SessionError, SessionLog};
pub use sim::{run_session_sim, synth_gesture, DeviceSim, GestureScript, SimError, SimParams};
pub use wire::{crc8, decode_stream, encode_frame, DecodeDiagnostics, StreamDecoder, FRAME_LEN};
