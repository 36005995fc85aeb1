use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

use tactile_core::detect::Margin;
use tactile_core::model::{DetectionConfig, Thresholds};
use tactile_core::session::{load, save, write_csv};
use tactile_service::commands::{self, ReportFormat};
use tactile_service::{http, open_source, spawn_service, ServiceConfig, SourceSpec};

#[derive(Debug, Parser)]
#[command(
    name = "tactile",
    version,
    about = "Capacitive tactile skin capture, replay and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a plan file through the simulated device and write a session CSV.
    Simulate {
        #[arg(long)]
        plan: PathBuf,
        /// Record this many idle frames with the plan's device parameters instead of its trials.
        #[arg(long)]
        idle: Option<usize>,
        /// Overrides the seed in the plan file.
        #[arg(long)]
        seed: Option<u64>,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the debounced touch events of a session as CSV.
    Replay {
        session: PathBuf,
        #[command(flatten)]
        detection: DetectionArgs,
    },
    /// Print per-cell detection rates of a labeled session.
    Evaluate {
        session: PathBuf,
        #[command(flatten)]
        detection: DetectionArgs,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Also write the rate table as CSV to this path.
        #[arg(long)]
        csv_out: Option<PathBuf>,
    },
    /// Derive per-sensor thresholds from an idle recording.
    Calibrate {
        idle: PathBuf,
        /// Multiplier on the largest idle delta, decimal or `a/b`.
        #[arg(long, default_value = "2.25")]
        margin: Margin,
        /// Also write the thresholds line to this path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Detection and false-positive rates over a range of uniform thresholds.
    Sweep {
        session: PathBuf,
        #[arg(long, default_value_t = 0)]
        from: u16,
        #[arg(long, default_value_t = 40)]
        to: u16,
        #[arg(long, default_value_t = 1)]
        step: u16,
    },
    /// Run the live capture service.
    Serve {
        /// `serial:<path>` or `sim:<plan.json>`.
        #[arg(long)]
        source: SourceSpec,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
        bind: IpAddr,
        #[command(flatten)]
        detection: DetectionArgs,
        /// Directory for end-of-session CSV files; defaults to `TACTILE_LOG_DIR` or the working directory.
        #[arg(long)]
        log_dir: Option<PathBuf>,
        /// Seed override for simulated sources.
        #[arg(long)]
        seed: Option<u64>,
        /// Playback speed factor for simulated sources.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Debug, Args)]
struct DetectionArgs {
    /// Uniform threshold for all sensors.
    #[arg(long, default_value_t = 10, conflicts_with = "thresholds_file")]
    threshold: u16,
    /// File with nine per-sensor thresholds, as printed by `calibrate`.
    #[arg(long)]
    thresholds_file: Option<PathBuf>,
    #[arg(long, default_value_t = DetectionConfig::DEFAULT_DEBOUNCE)]
    debounce_on: u32,
    #[arg(long, default_value_t = DetectionConfig::DEFAULT_DEBOUNCE)]
    debounce_off: u32,
}

impl DetectionArgs {
    fn config(&self) -> Result<DetectionConfig> {
        let thresholds = match &self.thresholds_file {
            Some(path) => commands::parse_thresholds(&read(path)?).with_context(|| format!("{}", path.display()))?,
            None => Thresholds::uniform(self.threshold)?,
        };
        Ok(DetectionConfig::new(thresholds, self.debounce_on, self.debounce_off)?)
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_session(path: &Path) -> Result<tactile_core::session::SessionLog> {
    load(path).with_context(|| format!("loading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();

    match Cli::parse().command {
        Command::Simulate { plan, idle, seed, out } => {
            let log = match idle {
                Some(frames) => commands::simulate_idle(&plan, frames, seed)?,
                None => commands::simulate(&plan, seed)?,
            };
            match out {
                Some(path) => save(&log, &path).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{}", write_csv(&log)),
            }
        }
        Command::Replay { session, detection } => {
            print!("{}", commands::replay(&load_session(&session)?, &detection.config()?)?);
        }
        Command::Evaluate {
            session,
            detection,
            format,
            csv_out,
        } => {
            let log = load_session(&session)?;
            let config = detection.config()?;
            let format = match format {
                Format::Text => ReportFormat::Text,
                Format::Csv => ReportFormat::Csv,
            };
            print!("{}", commands::evaluate(&log, &config, format)?);
            if let Some(path) = csv_out {
                write(&path, &commands::evaluate(&log, &config, ReportFormat::Csv)?)?;
            }
        }
        Command::Calibrate { idle, margin, out } => {
            let line = commands::thresholds_line(&commands::calibrate(&load_session(&idle)?, margin)?);
            println!("{line}");
            if let Some(path) = out {
                write(&path, &format!("{line}\n"))?;
            }
        }
        Command::Sweep {
            session,
            from,
            to,
            step,
        } => {
            print!("{}", commands::sweep(&load_session(&session)?, from, to, step)?);
        }
        Command::Serve {
            source,
            port,
            bind,
            detection,
            log_dir,
            seed,
            speed,
        } => {
            let mut config = ServiceConfig::from_env(detection.config()?);
            if let Some(dir) = log_dir {
                config.log_dir = dir;
            }
            serve(config, &source, SocketAddr::new(bind, port), seed, speed)?;
        }
    }
    Ok(())
}

#[tokio::main]
async fn serve(
    config: ServiceConfig,
    source: &SourceSpec,
    addr: SocketAddr,
    seed: Option<u64>,
    speed: f64,
) -> Result<()> {
    let bytes = open_source(source, seed, speed)?;
    let log_dir = config.log_dir.clone();
    let handle = spawn_service(config, bytes);
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    tracing::info!(%addr, log_dir = %log_dir.display(), "serving");
    axum::serve(listener, http::router(handle))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
