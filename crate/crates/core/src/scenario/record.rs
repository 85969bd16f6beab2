use serde::{Deserialize, Serialize};

use crate::mmae::{RefinementEvent, Strategy};
use crate::rotations::{Quaternion, Vec3};

use super::config::Mode;

/// Truth and fused estimate at one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSample {
    pub step: usize,
    pub t: f64,
    pub q_true: Quaternion,
    pub omega_true: Vec3,
    pub bias_true: Vec3,
    pub q_est: Quaternion,
    pub omega_est: Vec3,
    pub bias_est: Vec3,
    /// Estimated misalignment per camera, rad.
    pub mu_est: Vec<Vec3>,
    /// One-sigma bounds in error-state order: rate and bias in rad/s,
    /// attitude as rotation angle per axis in rad.
    pub sigma: [f64; 9],
    /// One-sigma misalignment bound per camera and axis, rad.
    pub mu_sigma: Vec<Vec3>,
    /// Hypothesis diversity, percent.
    pub psi: f64,
    /// Surviving models.
    pub models: usize,
    /// Weight of the most probable model.
    pub map_weight: f64,
    /// Misalignment of the most probable model per camera, rad.
    pub map_mu: Vec<Vec3>,
    /// A refinement happened at this step.
    pub refined: bool,
}

impl StepSample {
    /// Rotation vector taking the true attitude to the estimate, rad.
    pub fn attitude_error(&self) -> Vec3 {
        self.q_est.multiply(&self.q_true.conjugate()).to_rotation_vector()
    }

    pub fn omega_error(&self) -> Vec3 {
        self.omega_est - self.omega_true
    }

    pub fn bias_error(&self) -> Vec3 {
        self.bias_est - self.bias_true
    }
}

/// Complete history of one simulated run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_index: usize,
    pub seed: u64,
    pub mode: Mode,
    pub strategy: Option<Strategy>,
    /// True misalignment per camera, rad.
    pub mu_true: Vec<Vec3>,
    /// Samples every `decimation` steps from `t = 0`, plus the final step.
    pub samples: Vec<StepSample>,
    /// Samples taken right after each refinement.
    pub refinement_samples: Vec<StepSample>,
    pub events: Vec<RefinementEvent>,
}

impl RunRecord {
    pub fn last(&self) -> &StepSample {
        self.samples.last().expect("a run records at least two steps")
    }

    /// Decimated samples merged with refinement samples in step order.
    pub fn artifact_samples(&self) -> Vec<&StepSample> {
        let mut all: Vec<&StepSample> = self
            .samples
            .iter()
            .chain(&self.refinement_samples)
            .collect();
        all.sort_by_key(|s| s.step);
        all.dedup_by_key(|s| s.step);
        all
    }

    pub fn mu_error(&self, sample: &StepSample) -> Vec<Vec3> {
        sample
            .mu_est
            .iter()
            .zip(&self.mu_true)
            .map(|(e, t)| e - t)
            .collect()
    }
}
