//! CSV schemas of the run directory.

use std::io::Write;
use std::path::Path;

use serde::Deserialize;

use crate::battery::BatteryTrajectory;
use crate::controller::GapRecord;
use crate::stage::Targets;

use super::CliError;

pub const METRICS_HEADER: [&str; 9] = [
    "period",
    "E0_target",
    "peak_target",
    "running_cost",
    "lower_bound",
    "eps",
    "epsbar",
    "stage_cost",
    "peak_slack",
];
pub const REFERENCE_COLUMN: &str = "reference_cost";
pub const TARGETS_HEADER: [&str; 4] = ["period", "E0_target", "peak_target", "master_value"];
pub const TRAJECTORY_HEADER: [&str; 7] = ["period", "hour", "P", "F", "E", "d_util", "peak_slack"];

/// One row of metrics.csv.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct MetricsRow {
    pub period: usize,
    #[serde(rename = "E0_target")]
    pub e0_target: f64,
    pub peak_target: f64,
    pub running_cost: Option<f64>,
    pub lower_bound: f64,
    pub eps: Option<f64>,
    pub epsbar: Option<f64>,
    pub stage_cost: f64,
    pub peak_slack: f64,
    #[serde(default)]
    pub reference_cost: Option<f64>,
}

impl MetricsRow {
    pub fn from_record(r: &GapRecord) -> Self {
        Self {
            period: r.period,
            e0_target: r.targets.x0.first().copied().unwrap_or(0.0),
            peak_target: r.targets.eta,
            running_cost: r.running_cost,
            lower_bound: r.lower_bound,
            eps: r.current_gap,
            epsbar: r.overall_gap,
            stage_cost: r.stage_cost,
            peak_slack: r.slack_activation,
            reference_cost: None,
        }
    }

    pub fn targets(&self) -> Targets {
        Targets::new(vec![self.e0_target], self.peak_target)
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Writes metrics.csv; the reference column is included when any row has it.
pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<(), CliError> {
    let with_ref = rows.iter().any(|r| r.reference_cost.is_some());
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = METRICS_HEADER.to_vec();
    if with_ref {
        header.push(REFERENCE_COLUMN);
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.period.to_string(),
            num(r.e0_target),
            num(r.peak_target),
            opt(r.running_cost),
            num(r.lower_bound),
            opt(r.eps),
            opt(r.epsbar),
            num(r.stage_cost),
            num(r.peak_slack),
        ];
        if with_ref {
            rec.push(opt(r.reference_cost));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>, CliError> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let headers = r.headers()?.clone();
    for col in METRICS_HEADER {
        if !headers.iter().any(|h| h == col) {
            return Err(CliError::Input(format!(
                "{}: missing column {col}",
                path.display()
            )));
        }
    }
    r.deserialize()
        .collect::<Result<Vec<MetricsRow>, _>>()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Row 0 holds the initial targets; row m the targets chosen after period m.
pub fn write_targets(
    path: &Path,
    initial: &Targets,
    records: &[GapRecord],
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TARGETS_HEADER)?;
    let e0 = |t: &Targets| num(t.x0.first().copied().unwrap_or(0.0));
    w.write_record([
        "0".to_string(),
        e0(initial),
        num(initial.eta),
        String::new(),
    ])?;
    for r in records {
        w.write_record([
            r.period.to_string(),
            e0(&r.next_targets),
            num(r.next_targets.eta),
            num(r.master_value),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trajectories(
    path: &Path,
    plans: &[(usize, BatteryTrajectory)],
    steps: usize,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRAJECTORY_HEADER)?;
    for (period, tr) in plans {
        for t in 0..tr.energy.len() {
            w.write_record([
                period.to_string(),
                num(24.0 * t as f64 / steps as f64),
                num(tr.power[t]),
                num(tr.fr_capacity[t]),
                num(tr.energy[t]),
                num(tr.utility_draw[t]),
                num(tr.peak_slack[t]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value).map_err(std::io::Error::from)?;
    f.write_all(b"\n")?;
    Ok(())
}
