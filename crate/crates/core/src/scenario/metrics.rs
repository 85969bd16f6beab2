use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mekf::{ATTITUDE, BIAS, RATE};
use crate::rotations::principal_angle;

use super::record::RunRecord;

/// Monte Carlo RMSE trajectories on the shared sample times.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RmseSeries {
    pub t: Vec<f64>,
    /// Componentwise quaternion difference after sign alignment.
    pub quaternion: Vec<f64>,
    /// Principal rotation angle, deg.
    pub attitude_deg: Vec<f64>,
    /// rad/s.
    pub omega: Vec<f64>,
    /// rad/s.
    pub bias: Vec<f64>,
    /// All cameras stacked, rad.
    pub mu: Vec<f64>,
    /// One series per camera, rad.
    pub mu_per_camera: Vec<Vec<f64>>,
}

impl RmseSeries {
    pub fn final_mu(&self) -> f64 {
        self.mu.last().copied().unwrap_or(0.0)
    }
}

fn check_lengths(records: &[RunRecord]) -> Result<usize> {
    let first = records.first().ok_or(Error::LengthMismatch {
        expected: 1,
        found: 0,
    })?;
    let n = first.samples.len();
    for r in records {
        if r.samples.len() != n || r.mu_true.len() != first.mu_true.len() {
            return Err(Error::LengthMismatch {
                expected: n,
                found: r.samples.len(),
            });
        }
    }
    Ok(n)
}

/// RMSE across runs at every recorded sample.
pub fn compute_rmse(records: &[RunRecord]) -> Result<RmseSeries> {
    let n = check_lengths(records)?;
    let runs = records.len() as f64;
    let cameras = records[0].mu_true.len();
    let mut out = RmseSeries {
        mu_per_camera: vec![Vec::with_capacity(n); cameras],
        ..Default::default()
    };
    for k in 0..n {
        let (mut q, mut ang, mut w, mut b, mut mu) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let mut mu_cam = vec![0.0; cameras];
        for r in records {
            let s = &r.samples[k];
            let est = s.q_est.aligned_with(&s.q_true);
            q += (est.as_vector4() - s.q_true.as_vector4()).norm_squared();
            ang += principal_angle(&s.q_est, &s.q_true).powi(2);
            w += s.omega_error().norm_squared();
            b += s.bias_error().norm_squared();
            for (c, e) in r.mu_error(s).iter().enumerate() {
                mu_cam[c] += e.norm_squared();
                mu += e.norm_squared();
            }
        }
        out.t.push(records[0].samples[k].t);
        out.quaternion.push((q / runs).sqrt());
        out.attitude_deg.push((ang / runs).sqrt().to_degrees());
        out.omega.push((w / runs).sqrt());
        out.bias.push((b / runs).sqrt());
        out.mu.push((mu / runs).sqrt());
        for (series, v) in out.mu_per_camera.iter_mut().zip(mu_cam) {
            series.push((v / runs).sqrt());
        }
    }
    Ok(out)
}

/// Fraction of post-transient samples with `|error| ≤ 3σ`, per component.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub attitude: [f64; 3],
    pub omega: [f64; 3],
    pub bias: [f64; 3],
    /// Per camera and axis.
    pub mu: Vec<[f64; 3]>,
    pub samples: usize,
}

impl Coverage {
    pub fn attitude_group(&self) -> f64 {
        mean(&self.attitude)
    }

    pub fn omega_group(&self) -> f64 {
        mean(&self.omega)
    }

    pub fn bias_group(&self) -> f64 {
        mean(&self.bias)
    }

    pub fn mu_group(&self) -> f64 {
        let all: Vec<f64> = self.mu.iter().flatten().copied().collect();
        if all.is_empty() {
            1.0
        } else {
            mean(&all)
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn within(e: f64, sigma: f64) -> bool {
    e.abs() <= 3.0 * sigma
}

/// 3σ coverage per component over samples with `t` at or after
/// `transient_fraction` of each run's final time.
pub fn consistency_report(records: &[RunRecord], transient_fraction: f64) -> Coverage {
    let cameras = records.first().map_or(0, |r| r.mu_true.len());
    let mut hits = [[0usize; 3]; 3];
    let mut mu_hits = vec![[0usize; 3]; cameras];
    let mut count = 0usize;
    for r in records {
        let cutoff = transient_fraction * r.last().t;
        for s in r.samples.iter().filter(|s| s.t >= cutoff) {
            count += 1;
            let errors = [s.attitude_error(), s.omega_error(), s.bias_error()];
            for (g, offset) in [ATTITUDE, RATE, BIAS].into_iter().enumerate() {
                for i in 0..3 {
                    hits[g][i] += within(errors[g][i], s.sigma[offset + i]) as usize;
                }
            }
            for (c, e) in r.mu_error(s).iter().enumerate() {
                for i in 0..3 {
                    mu_hits[c][i] += within(e[i], s.mu_sigma[c][i]) as usize;
                }
            }
        }
    }
    let frac = |h: [usize; 3]| {
        if count == 0 {
            [1.0; 3]
        } else {
            h.map(|x| x as f64 / count as f64)
        }
    };
    Coverage {
        attitude: frac(hits[0]),
        omega: frac(hits[1]),
        bias: frac(hits[2]),
        mu: mu_hits.into_iter().map(frac).collect(),
        samples: count,
    }
}

/// Per-axis statistics of final errors across runs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FinalErrors {
    /// Mean per-axis attitude error, deg.
    pub attitude_deg: [f64; 3],
    /// Mean per-axis rate error, rad/s.
    pub omega: [f64; 3],
    /// Mean per-axis bias error, rad/s.
    pub bias: [f64; 3],
    /// Mean per-axis misalignment error per camera, deg.
    pub mu_deg: Vec<[f64; 3]>,
    /// Principal-angle attitude error across runs, deg.
    pub angle_mean_deg: f64,
    pub angle_std_deg: f64,
    pub angle_max_deg: f64,
}

pub fn final_errors(records: &[RunRecord]) -> FinalErrors {
    let n = records.len().max(1) as f64;
    let cameras = records.first().map_or(0, |r| r.mu_true.len());
    let mut out = FinalErrors {
        mu_deg: vec![[0.0; 3]; cameras],
        ..Default::default()
    };
    let mut angles = Vec::with_capacity(records.len());
    for r in records {
        let s = r.last();
        let a = s.attitude_error();
        let (w, b) = (s.omega_error(), s.bias_error());
        for i in 0..3 {
            out.attitude_deg[i] += a[i].to_degrees() / n;
            out.omega[i] += w[i] / n;
            out.bias[i] += b[i] / n;
        }
        for (acc, e) in out.mu_deg.iter_mut().zip(r.mu_error(s)) {
            for i in 0..3 {
                acc[i] += e[i].to_degrees() / n;
            }
        }
        angles.push(principal_angle(&s.q_est, &s.q_true).to_degrees());
    }
    if !angles.is_empty() {
        let m = mean(&angles);
        out.angle_mean_deg = m;
        out.angle_std_deg = (angles.iter().map(|a| (a - m).powi(2)).sum::<f64>() / n).sqrt();
        out.angle_max_deg = angles.iter().copied().fold(0.0, f64::max);
    }
    out
}

/// Refinement counts per run and a time histogram of all events.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RefinementStats {
    pub counts: Vec<usize>,
    pub mean_count: f64,
    /// Left bin edges, s.
    pub bin_edges: Vec<f64>,
    pub histogram: Vec<usize>,
}

pub const HISTOGRAM_BINS: usize = 20;

pub fn refinement_stats(records: &[RunRecord]) -> RefinementStats {
    let counts: Vec<usize> = records.iter().map(|r| r.events.len()).collect();
    let mean_count = if counts.is_empty() {
        0.0
    } else {
        counts.iter().sum::<usize>() as f64 / counts.len() as f64
    };
    let end = records.iter().map(|r| r.last().t).fold(0.0, f64::max);
    let width = if end > 0.0 { end / HISTOGRAM_BINS as f64 } else { 1.0 };
    let mut histogram = vec![0; HISTOGRAM_BINS];
    for e in records.iter().flat_map(|r| &r.events) {
        let bin = ((e.t / width) as usize).min(HISTOGRAM_BINS - 1);
        histogram[bin] += 1;
    }
    RefinementStats {
        counts,
        mean_count,
        bin_edges: (0..HISTOGRAM_BINS).map(|i| i as f64 * width).collect(),
        histogram,
    }
}

/// A run that errored inside a campaign.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub run_index: usize,
    pub message: String,
}

/// Everything a campaign reports about its completed runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub schema_version: u32,
    pub runs_completed: usize,
    pub failures: Vec<RunFailure>,
    pub rmse: RmseSeries,
    pub final_errors: FinalErrors,
    pub refinements: RefinementStats,
    pub coverage: Coverage,
    pub transient_fraction: f64,
}

impl CampaignSummary {
    pub fn from_records(
        records: &[RunRecord],
        failures: Vec<RunFailure>,
        transient_fraction: f64,
    ) -> Result<Self> {
        Ok(Self {
            schema_version: super::artifacts::SCHEMA_VERSION,
            runs_completed: records.len(),
            failures,
            rmse: compute_rmse(records)?,
            final_errors: final_errors(records),
            refinements: refinement_stats(records),
            coverage: consistency_report(records, transient_fraction),
            transient_fraction,
        })
    }
}

