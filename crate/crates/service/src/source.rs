//! Device byte sources: a serial device node or a simulated device driven by a
//! plan file.

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use thiserror::Error;
use tokio::sync::mpsc;

use tactile_core::model::{canonical_topology, SENSOR_COUNT};
use tactile_core::sim::{DeviceSim, PlanSpec, SimError, SimParams, IDLE_GAP_FRAMES};

const CHANNEL_CAPACITY: usize = 64;
const READ_CHUNK: usize = 4096;

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("source must be `serial:<path>` or `sim:<plan.json>`, got `{0}`")]
    Spec(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Plan {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SourceSpec {
    Serial(PathBuf),
    Sim(PathBuf),
}

impl FromStr for SourceSpec {
    type Err = SourceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            Some(("serial", path)) if !path.is_empty() => Ok(Self::Serial(path.into())),
            Some(("sim", path)) if !path.is_empty() => Ok(Self::Sim(path.into())),
            _ => Err(SourceError::Spec(s.to_string())),
        }
    }
}

pub fn load_plan(path: &Path) -> Result<PlanSpec, SourceError> {
    let text = std::fs::read_to_string(path).map_err(|source| SourceError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| SourceError::Plan {
        path: path.to_path_buf(),
        source,
    })
}

/// Simulated device: plays the plan's gestures (each after an idle gap), then
/// idles forever, pacing frames on the plan's frame period divided by `speed`.
#[derive(Debug, Clone)]
pub struct SimSource {
    params: SimParams,
    envelopes: Vec<[f64; SENSOR_COUNT]>,
    period: Duration,
}

impl SimSource {
    pub fn new(plan: &PlanSpec, speed: f64) -> Result<Self, SourceError> {
        plan.params.validate()?;
        if !(speed.is_finite() && speed > 0.0) {
            return Err(SimError::Params(format!("speed must be positive, got {speed}")).into());
        }
        let topology = canonical_topology();
        let mut envelopes = Vec::new();
        for (_, script) in plan.steps()? {
            envelopes.extend(std::iter::repeat_n([0.0; SENSOR_COUNT], IDLE_GAP_FRAMES));
            envelopes.extend(script.envelope(&topology)?);
        }
        let period = Duration::from_secs_f64(f64::from(plan.params.frame_period_ms) / 1000.0 / speed);
        Ok(Self {
            params: plan.params.clone(),
            envelopes,
            period,
        })
    }

    /// Number of scripted frames before the endless idle tail.
    pub fn scripted_frames(&self) -> usize {
        self.envelopes.len()
    }

    pub fn spawn(self) -> mpsc::Receiver<Vec<u8>> {
        let (tx, rx) = mpsc::channel(CHANNEL_CAPACITY);
        tokio::spawn(async move {
            let mut device = DeviceSim::new(self.params).expect("params validated");
            let mut ticker = tokio::time::interval(self.period);
            ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
            let idle = [0.0; SENSOR_COUNT];
            let mut scripted = self.envelopes.iter();
            loop {
                ticker.tick().await;
                let envelope = scripted.next().unwrap_or(&idle);
                if tx.send(device.next_wire_frame(envelope).to_vec()).await.is_err() {
                    break;
                }
            }
        });
        rx
    }
}

/// Reads a device node (or any file) on a blocking thread until EOF or error.
pub fn spawn_serial(path: &Path) -> Result<mpsc::Receiver<Vec<u8>>, SourceError> {
    let mut file = File::open(path).map_err(|source| SourceError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let (tx, rx) = mpsc::channel(CHANNEL_CAPACITY);
    let path = path.to_path_buf();
    tokio::task::spawn_blocking(move || {
        let mut buf = vec![0u8; READ_CHUNK];
        loop {
            match file.read(&mut buf) {
                Ok(0) => break,
                Ok(n) => {
                    if tx.blocking_send(buf[..n].to_vec()).is_err() {
                        break;
                    }
                }
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => {
                    tracing::error!(path = %path.display(), error = %e, "serial read failed");
                    break;
                }
            }
        }
    });
    Ok(rx)
}

/// Opens a source described by `spec`. `speed` only affects simulated sources.
pub fn open_source(spec: &SourceSpec, seed: Option<u64>, speed: f64) -> Result<mpsc::Receiver<Vec<u8>>, SourceError> {
    match spec {
        SourceSpec::Serial(path) => spawn_serial(path),
        SourceSpec::Sim(path) => {
            let mut plan = load_plan(path)?;
            if let Some(seed) = seed {
                plan.params.seed = seed;
            }
            Ok(SimSource::new(&plan, speed)?.spawn())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tactile_core::wire::{StreamDecoder, FRAME_LEN};

    #[test]
    fn parses_source_specs() {
        assert_eq!(
            "serial:/dev/ttyACM0".parse::<SourceSpec>().unwrap(),
            SourceSpec::Serial("/dev/ttyACM0".into())
        );
        assert_eq!(
            "sim:plan.json".parse::<SourceSpec>().unwrap(),
            SourceSpec::Sim("plan.json".into())
        );
        for bad in ["", "serial:", "usb:/dev/x", "plan.json"] {
            assert!(bad.parse::<SourceSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn rejects_bad_speed() {
        assert!(SimSource::new(&PlanSpec::default(), 0.0).is_err());
        assert!(SimSource::new(&PlanSpec::default(), f64::NAN).is_err());
    }

    #[tokio::test]
    async fn sim_source_emits_clean_frames_past_the_script() {
        let plan: PlanSpec =
            serde_json::from_str(r#"{"trials": [{"participant": "p01", "gesture": "poke", "region": "top_head"}]}"#)
                .unwrap();
        let source = SimSource::new(&plan, 1000.0).unwrap();
        let scripted = source.scripted_frames();
        assert_eq!(scripted, IDLE_GAP_FRAMES + 4);
        let mut rx = source.spawn();
        let mut dec = StreamDecoder::new();
        let mut frames = Vec::new();
        while frames.len() < scripted + 5 {
            let chunk = rx.recv().await.unwrap();
            assert_eq!(chunk.len(), FRAME_LEN);
            frames.extend(dec.push(&chunk));
        }
        assert!(dec.diagnostics().is_clean());
        assert!(frames.windows(2).all(|w| w[1].t_ms() == w[0].t_ms() + 110));
        assert!(frames[IDLE_GAP_FRAMES].delta(0) > 10);
    }

    #[tokio::test]
    async fn serial_source_reads_file_to_eof() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dev");
        std::fs::write(&path, vec![7u8; 10_000]).unwrap();
        let mut rx = spawn_serial(&path).unwrap();
        let mut total = 0;
        while let Some(chunk) = rx.recv().await {
            total += chunk.len();
        }
        assert_eq!(total, 10_000);
        assert!(spawn_serial(&dir.path().join("missing")).is_err());
    }
}
