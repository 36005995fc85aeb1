//! Single-writer capture task. All state lives in one [`LiveSession`] owned by
//! a tokio task; HTTP handlers talk to it through [`ServiceHandle`].

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use tokio::sync::{broadcast, mpsc, oneshot};

use tactile_core::detect::TrialVerdict;
use tactile_core::model::{DetectionConfig, GestureKind, RegionId, Thresholds};
use tactile_core::session::{save, SessionLog};

use crate::live::{LiveEvent, LiveSession, Phase, ServiceError, SessionState};

/// Environment variable naming the directory for end-of-session CSV files.
pub const LOG_DIR_ENV: &str = "TACTILE_LOG_DIR";

const COMMAND_CAPACITY: usize = 32;
const EVENT_CAPACITY: usize = 1024;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub detection: DetectionConfig,
    pub log_dir: PathBuf,
}

impl ServiceConfig {
    /// Log directory from `TACTILE_LOG_DIR`, else the working directory.
    pub fn from_env(detection: DetectionConfig) -> Self {
        let log_dir = std::env::var_os(LOG_DIR_ENV).map_or_else(|| PathBuf::from("."), PathBuf::from);
        Self { detection, log_dir }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionSummary {
    pub participant: String,
    pub frames: usize,
    pub trials: usize,
    pub path: PathBuf,
}

type Reply<T> = oneshot::Sender<Result<T, ServiceError>>;

enum Command {
    StartSession(String, Reply<SessionState>),
    StopSession(Reply<SessionSummary>),
    StartTrial(GestureKind, RegionId, Reply<SessionState>),
    StopTrial(Reply<TrialVerdict>),
    SetThresholds(Vec<i64>, Reply<Thresholds>),
    Snapshot(Reply<SessionState>),
}

#[derive(Debug, Clone)]
pub struct ServiceHandle {
    commands: mpsc::Sender<Command>,
    events: broadcast::Sender<Arc<LiveEvent>>,
}

impl ServiceHandle {
    pub fn subscribe(&self) -> broadcast::Receiver<Arc<LiveEvent>> {
        self.events.subscribe()
    }

    async fn call<T>(&self, make: impl FnOnce(Reply<T>) -> Command) -> Result<T, ServiceError> {
        let (tx, rx) = oneshot::channel();
        self.commands
            .send(make(tx))
            .await
            .map_err(|_| ServiceError::Unavailable)?;
        rx.await.map_err(|_| ServiceError::Unavailable)?
    }

    pub async fn start_session(&self, participant: String) -> Result<SessionState, ServiceError> {
        self.call(|r| Command::StartSession(participant, r)).await
    }

    pub async fn stop_session(&self) -> Result<SessionSummary, ServiceError> {
        self.call(Command::StopSession).await
    }

    pub async fn start_trial(&self, gesture: GestureKind, region: RegionId) -> Result<SessionState, ServiceError> {
        self.call(|r| Command::StartTrial(gesture, region, r)).await
    }

    pub async fn stop_trial(&self) -> Result<TrialVerdict, ServiceError> {
        self.call(Command::StopTrial).await
    }

    pub async fn set_thresholds(&self, values: Vec<i64>) -> Result<Thresholds, ServiceError> {
        self.call(|r| Command::SetThresholds(values, r)).await
    }

    pub async fn snapshot(&self) -> Result<SessionState, ServiceError> {
        self.call(Command::Snapshot).await
    }
}

/// Starts the capture task, consuming raw device bytes from `bytes`.
pub fn spawn_service(config: ServiceConfig, bytes: mpsc::Receiver<Vec<u8>>) -> ServiceHandle {
    let (commands, command_rx) = mpsc::channel(COMMAND_CAPACITY);
    let (events, _) = broadcast::channel(EVENT_CAPACITY);
    let task = Actor {
        session: LiveSession::new(config.detection),
        log_dir: config.log_dir,
        events: events.clone(),
    };
    tokio::spawn(task.run(command_rx, bytes));
    ServiceHandle { commands, events }
}

struct Actor {
    session: LiveSession,
    log_dir: PathBuf,
    events: broadcast::Sender<Arc<LiveEvent>>,
}

impl Actor {
    async fn run(mut self, mut commands: mpsc::Receiver<Command>, mut bytes: mpsc::Receiver<Vec<u8>>) {
        let mut source_open = true;
        loop {
            tokio::select! {
                biased;
                cmd = commands.recv() => match cmd {
                    Some(cmd) => self.handle(cmd),
                    None => break,
                },
                chunk = bytes.recv(), if source_open => match chunk {
                    Some(chunk) => {
                        for event in self.session.ingest_bytes(&chunk) {
                            self.publish(event);
                        }
                    }
                    None => {
                        tracing::warn!("device source ended");
                        source_open = false;
                    }
                },
            }
        }
    }

    fn publish(&self, event: LiveEvent) {
        // No subscribers is fine; lagging subscribers lose events, never the log.
        let _ = self.events.send(Arc::new(event));
    }

    fn handle(&mut self, cmd: Command) {
        match cmd {
            Command::StartSession(participant, reply) => {
                let r = self
                    .session
                    .start_session(&participant)
                    .map(|()| self.session.snapshot());
                let _ = reply.send(r);
            }
            Command::StopSession(reply) => {
                let _ = reply.send(self.stop_session());
            }
            Command::StartTrial(gesture, region, reply) => {
                let r = self.session.start_trial(gesture, region).map(|event| {
                    self.publish(event);
                    self.session.snapshot()
                });
                let _ = reply.send(r);
            }
            Command::StopTrial(reply) => {
                let r = self.session.stop_trial().map(|(verdict, event)| {
                    self.publish(event);
                    verdict
                });
                let _ = reply.send(r);
            }
            Command::SetThresholds(values, reply) => {
                let _ = reply.send(self.session.set_thresholds(&values));
            }
            Command::Snapshot(reply) => {
                let _ = reply.send(Ok(self.session.snapshot()));
            }
        }
    }

    /// Writes the log before closing, so a failed write leaves the session open.
    fn stop_session(&mut self) -> Result<SessionSummary, ServiceError> {
        if self.session.phase() != Phase::SessionOpen {
            return Err(self
                .session
                .stop_session()
                .expect_err("only an open session can be stopped"));
        }
        let path = write_log(&self.log_dir, self.session.log().expect("session open"))?;
        let log = self.session.stop_session()?;
        tracing::info!(path = %path.display(), frames = log.len(), "session saved");
        Ok(SessionSummary {
            participant: log.participant().to_string(),
            frames: log.len(),
            trials: log.trials().len(),
            path,
        })
    }
}

fn write_log(dir: &Path, log: &SessionLog) -> Result<PathBuf, ServiceError> {
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let stem = format!("session-{}-{stamp}", log.participant());
    let mut path = dir.join(format!("{stem}.csv"));
    let mut n = 1;
    while path.exists() {
        path = dir.join(format!("{stem}-{n}.csv"));
        n += 1;
    }
    std::fs::create_dir_all(dir).map_err(|e| ServiceError::Storage(format!("{}: {e}", dir.display())))?;
    save(log, &path).map_err(|e| ServiceError::Storage(format!("{}: {e}", path.display())))?;
    Ok(path)
}
