//! Offline subcommands of the `tactile` tool, as pure functions over logs and
//! text so they can be tested without a process.

use std::path::Path;

use anyhow::{bail, Context, Result};

use tactile_core::detect::{calibrate_thresholds, eventize, Margin};
use tactile_core::eval::{
    detection_table, events_to_csv, idle_false_positive_rate, region_summary, summary_to_text, sweep_to_csv,
    threshold_sweep,
};
use tactile_core::model::{DetectionConfig, Thresholds, SENSOR_COUNT};
use tactile_core::session::SessionLog;
use tactile_core::sim::{run_idle_sim, run_session_sim, PlanSpec};

use crate::source::load_plan;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
}

fn plan_with_seed(plan: &Path, seed: Option<u64>) -> Result<PlanSpec> {
    let mut spec = load_plan(plan)?;
    if let Some(seed) = seed {
        spec.params.seed = seed;
    }
    Ok(spec)
}

/// Runs a plan file through the simulated device.
pub fn simulate(plan: &Path, seed: Option<u64>) -> Result<SessionLog> {
    let spec = plan_with_seed(plan, seed)?;
    Ok(run_session_sim(&spec.steps()?, &spec.params)?)
}

/// Idle-only recording with the plan's device parameters, labeled participant `idle`.
pub fn simulate_idle(plan: &Path, frames: usize, seed: Option<u64>) -> Result<SessionLog> {
    let spec = plan_with_seed(plan, seed)?;
    Ok(run_idle_sim(frames, "idle", &spec.params)?)
}

/// Debounced touch events of a recorded session, as CSV.
pub fn replay(log: &SessionLog, config: &DetectionConfig) -> Result<String> {
    Ok(events_to_csv(&eventize(log.frames(), config)?))
}

/// Detection-rate table, region means when every study gesture is present,
/// and the idle false-positive rate.
pub fn evaluate(log: &SessionLog, config: &DetectionConfig, format: ReportFormat) -> Result<String> {
    let table = detection_table(log, config)?;
    Ok(match format {
        ReportFormat::Csv => table.to_csv(),
        ReportFormat::Text => {
            let mut out = table.to_text();
            if let Ok(summary) = region_summary(&table) {
                out.push('\n');
                out.push_str(&summary_to_text(&summary));
            }
            let total = table.total();
            out.push_str(&format!(
                "\noverall: {}/{} trials detected ({}%)\nidle false-positive rate: {:.4}\n",
                total.detected,
                total.trials,
                total.percent(),
                idle_false_positive_rate(log, config)
            ));
            out
        }
    })
}

pub fn calibrate(idle: &SessionLog, margin: Margin) -> Result<Thresholds> {
    Ok(calibrate_thresholds(idle.frames(), margin)?)
}

/// Comma-separated thresholds, the format read by [`parse_thresholds`].
pub fn thresholds_line(t: &Thresholds) -> String {
    let values: Vec<String> = t.values().iter().map(u16::to_string).collect();
    values.join(",")
}

/// Reads nine thresholds separated by commas or whitespace; `#` starts a comment.
pub fn parse_thresholds(text: &str) -> Result<Thresholds> {
    let values = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split(|c: char| c == ',' || c.is_whitespace()))
        .filter(|tok| !tok.is_empty())
        .map(|tok| tok.parse::<u16>().with_context(|| format!("bad threshold `{tok}`")))
        .collect::<Result<Vec<u16>>>()?;
    if values.len() != SENSOR_COUNT {
        bail!("expected {SENSOR_COUNT} thresholds, found {}", values.len());
    }
    Ok(Thresholds::from_slice(&values)?)
}

/// Uniform threshold sweep over `from..=to` in steps of `step`, as CSV.
pub fn sweep(log: &SessionLog, from: u16, to: u16, step: u16) -> Result<String> {
    if step == 0 || from > to {
        bail!("sweep needs from <= to and a positive step");
    }
    let thresholds: Vec<u16> = (from..=to).step_by(usize::from(step)).collect();
    Ok(sweep_to_csv(&threshold_sweep(log, &thresholds)?))
}
