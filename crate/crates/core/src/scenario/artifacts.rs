//! On-disk artifacts: one time-series CSV per run, a campaign summary JSON,
//! an RMSE CSV and an events CSV. Column names carry their units.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mekf::{ATTITUDE, BIAS, RATE};
use crate::mmae::Strategy;
use crate::rotations::principal_angle;

use super::config::ScenarioConfig;
use super::metrics::{CampaignSummary, RmseSeries, RunFailure};
use super::record::{RunRecord, StepSample};
use super::runner::Campaign;

/// Bumped whenever a column or summary field changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

const AXES: [&str; 3] = ["x", "y", "z"];
const QUAT: [&str; 4] = ["x", "y", "z", "w"];

/// Header of a run CSV for the given number of cameras.
pub fn run_columns(cameras: usize) -> Vec<String> {
    let mut cols = vec!["step".to_string(), "t_s".to_string()];
    for who in ["true", "est"] {
        cols.extend(QUAT.iter().map(|a| format!("q_{who}_{a}")));
    }
    cols.extend(AXES.iter().map(|a| format!("att_err_{a}_deg")));
    cols.push("att_angle_deg".into());
    cols.extend(AXES.iter().map(|a| format!("att_sigma_{a}_deg")));
    for state in ["omega", "bias"] {
        for what in ["true", "est", "err", "sigma"] {
            cols.extend(AXES.iter().map(|a| format!("{state}_{what}_{a}_rad_s")));
        }
    }
    for c in 1..=cameras {
        for what in ["true", "est", "err", "sigma"] {
            cols.extend(AXES.iter().map(|a| format!("mu{c}_{what}_{a}_deg")));
        }
    }
    cols.extend(["psi_pct", "models", "map_weight", "refined"].map(String::from));
    cols
}

fn run_row(record: &RunRecord, s: &StepSample) -> Vec<String> {
    let mut row: Vec<f64> = vec![s.step as f64, s.t];
    row.extend(s.q_true.as_vector4().iter());
    row.extend(s.q_est.aligned_with(&s.q_true).as_vector4().iter());
    row.extend(s.attitude_error().iter().map(|e| e.to_degrees()));
    row.push(principal_angle(&s.q_est, &s.q_true).to_degrees());
    row.extend(s.sigma[ATTITUDE..ATTITUDE + 3].iter().map(|v| v.to_degrees()));
    for (t, e, offset) in [
        (s.omega_true, s.omega_est, RATE),
        (s.bias_true, s.bias_est, BIAS),
    ] {
        row.extend(t.iter());
        row.extend(e.iter());
        row.extend((e - t).iter());
        row.extend(s.sigma[offset..offset + 3].iter());
    }
    for (c, mu_true) in record.mu_true.iter().enumerate() {
        let est = s.mu_est[c];
        for v in [*mu_true, est, est - mu_true, s.mu_sigma[c]] {
            row.extend(v.iter().map(|x| x.to_degrees()));
        }
    }
    row.push(s.psi);
    row.push(s.models as f64);
    row.push(s.map_weight);
    row.push(if s.refined { 1.0 } else { 0.0 });
    row.iter().map(|v| v.to_string()).collect()
}

/// Writes decimated and refinement samples of one run.
pub fn write_run_csv<W: Write>(record: &RunRecord, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(run_columns(record.mu_true.len()))?;
    for s in record.artifact_samples() {
        w.write_record(run_row(record, s))?;
    }
    w.flush()?;
    Ok(())
}

/// Parsed run CSV: the header and numeric rows.
#[derive(Clone, Debug, PartialEq)]
pub struct RunTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl RunTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

/// Reads a run CSV and checks its header against the current schema.
pub fn read_run_csv<R: Read>(reader: R) -> Result<RunTable> {
    let mut r = csv::Reader::from_reader(reader);
    let columns: Vec<String> = r.headers()?.iter().map(String::from).collect();
    let cameras = columns
        .iter()
        .filter(|c| c.ends_with("_true_x_deg") && c.starts_with("mu"))
        .count();
    let expected = run_columns(cameras);
    if columns != expected {
        let missing = expected.iter().find(|c| !columns.contains(c));
        return Err(Error::Schema(match missing {
            Some(c) => format!("missing column {c}"),
            None => "unexpected column layout".into(),
        }));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| Error::Schema(format!("non-numeric value {v:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(RunTable { columns, rows })
}

pub fn rmse_columns(cameras: usize) -> Vec<String> {
    let mut cols: Vec<String> = [
        "t_s",
        "quaternion",
        "attitude_deg",
        "omega_rad_s",
        "bias_rad_s",
        "mu_rad",
    ]
    .map(String::from)
    .to_vec();
    cols.extend((1..=cameras).map(|c| format!("mu{c}_rad")));
    cols
}

pub fn write_rmse_csv<W: Write>(rmse: &RmseSeries, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(rmse_columns(rmse.mu_per_camera.len()))?;
    for k in 0..rmse.t.len() {
        let mut row = vec![
            rmse.t[k],
            rmse.quaternion[k],
            rmse.attitude_deg[k],
            rmse.omega[k],
            rmse.bias[k],
            rmse.mu[k],
        ];
        row.extend(rmse.mu_per_camera.iter().map(|s| s[k]));
        w.write_record(row.iter().map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

pub fn event_columns(cameras: usize) -> Vec<String> {
    let mut cols: Vec<String> = ["run", "step", "t_s", "strategy", "half_width_deg", "psi_before_pct"]
        .map(String::from)
        .to_vec();
    for c in 1..=cameras {
        cols.extend(AXES.iter().map(|a| format!("center{c}_{a}_deg")));
    }
    cols
}

pub fn write_events_csv<W: Write>(records: &[RunRecord], writer: W) -> Result<()> {
    let cameras = records.first().map_or(0, |r| r.mu_true.len());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(event_columns(cameras))?;
    for r in records {
        for e in &r.events {
            let mut row = vec![
                r.run_index.to_string(),
                e.step.to_string(),
                e.t.to_string(),
                e.strategy.name().to_string(),
                e.half_width.to_degrees().to_string(),
                e.psi_before.to_string(),
            ];
            for c in &e.center {
                row.extend(c.iter().map(|v| v.to_degrees().to_string()));
            }
            w.write_record(row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Campaign summary as written to `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub schema_version: u32,
    pub preset: Option<String>,
    pub config: ScenarioConfig,
    pub summary: CampaignSummary,
}

pub fn summary_to_json(file: &SummaryFile) -> Result<String> {
    Ok(serde_json::to_string_pretty(file)?)
}

/// Parses a summary and refuses other schema versions.
pub fn summary_from_json(s: &str) -> Result<SummaryFile> {
    versioned_from_json(s)
}

fn versioned_from_json<T: serde::de::DeserializeOwned>(s: &str) -> Result<T> {
    let value: serde_json::Value = serde_json::from_str(s)?;
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        Some(v) => {
            return Err(Error::Schema(format!(
                "schema version {v}, expected {SCHEMA_VERSION}"
            )))
        }
        None => return Err(Error::Schema("missing schema_version".into())),
    }
    Ok(serde_json::from_value(value)?)
}

/// One strategy's line in a strategy comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyResult {
    pub strategy: Strategy,
    pub runs_completed: usize,
    pub mean_refinements: f64,
    /// Misalignment RMSE at the last sample, rad.
    pub final_mu_rmse: f64,
    pub failures: Vec<RunFailure>,
}

/// Strategy comparison as written to `comparison.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonFile {
    pub schema_version: u32,
    pub preset: Option<String>,
    pub seed: u64,
    pub runs: usize,
    pub results: Vec<StrategyResult>,
}

impl ComparisonFile {
    pub fn from_campaigns(
        preset: Option<String>,
        config: &ScenarioConfig,
        campaigns: &[(Strategy, Campaign)],
    ) -> Self {
        let results = campaigns
            .iter()
            .map(|(strategy, c)| StrategyResult {
                strategy: *strategy,
                runs_completed: c.summary.runs_completed,
                mean_refinements: c.summary.refinements.mean_count,
                final_mu_rmse: c.summary.rmse.final_mu(),
                failures: c.summary.failures.clone(),
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            preset,
            seed: config.seed,
            runs: config.runs,
            results,
        }
    }

    pub fn result(&self, strategy: Strategy) -> Option<&StrategyResult> {
        self.results.iter().find(|r| r.strategy == strategy)
    }
}

pub fn comparison_to_json(file: &ComparisonFile) -> Result<String> {
    Ok(serde_json::to_string_pretty(file)?)
}

/// Parses a comparison and refuses other schema versions.
pub fn comparison_from_json(s: &str) -> Result<ComparisonFile> {
    versioned_from_json(s)
}

pub fn run_file_name(run_index: usize) -> String {
    format!("run_{run_index:04}.csv")
}

/// Writes every artifact of a campaign into `dir` and returns the paths.
pub fn write_campaign(
    dir: &Path,
    records: &[RunRecord],
    summary: &SummaryFile,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for r in records {
        let p = dir.join(run_file_name(r.run_index));
        write_run_csv(r, fs::File::create(&p)?)?;
        paths.push(p);
    }
    let p = dir.join("rmse.csv");
    write_rmse_csv(&summary.summary.rmse, fs::File::create(&p)?)?;
    paths.push(p);
    let p = dir.join("events.csv");
    write_events_csv(records, fs::File::create(&p)?)?;
    paths.push(p);
    let p = dir.join("summary.json");
    fs::write(&p, summary_to_json(summary)?)?;
    paths.push(p);
    let p = dir.join("config.toml");
    fs::write(&p, summary.config.to_toml_string()?)?;
    paths.push(p);
    Ok(paths)
}
