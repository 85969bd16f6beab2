//! Bank of misalignment hypotheses with Bayesian weights, pruning, the
//! diversity metric and adaptive grid refinement.

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{fuse, markley_average, weighted_mean_mu, FusedEstimate, Member};
use crate::mekf::{Camera, FilterTuning, Mekf};
use crate::rotations::{Quaternion, Vec3};
use crate::dynamics::InertiaMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Refine when one model's weight exceeds the branching threshold; centre
    /// on that model and seed from its filter.
    ClassicalMap,
    /// Refine when diversity drops below threshold; centre on the MAP model.
    PsiMap,
    /// Refine when diversity drops below threshold; centre on the weighted mean.
    PsiMean,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::ClassicalMap, Strategy::PsiMap, Strategy::PsiMean];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::ClassicalMap => "classical_map",
            Strategy::PsiMap => "psi_map",
            Strategy::PsiMean => "psi_mean",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classical_map" | "classical" => Ok(Strategy::ClassicalMap),
            "psi_map" => Ok(Strategy::PsiMap),
            "psi_mean" => Ok(Strategy::PsiMean),
            other => Err(Error::InvalidConfig(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(default)]
pub struct RefinementPolicy {
    pub strategy: Strategy,
    /// Weight a single model must exceed to trigger the classical strategy.
    pub branch_weight: f64,
    /// Diversity, in percent, below which the Ψ strategies refine.
    pub psi_threshold: f64,
    /// Factor applied to the grid half-width on every refinement.
    pub contraction: f64,
    pub max_refinements: usize,
    /// Minimum number of steps between grid (re)builds and the next refinement.
    pub cooldown_steps: usize,
    /// Models at or below this weight are dropped.
    pub prune_threshold: f64,
    /// Re-seed each refined model's attitude so that its predicted sensor
    /// attitude agrees with the seed's.
    pub consistent_reseed: bool,
}

impl Default for RefinementPolicy {
    fn default() -> Self {
        Self {
            strategy: Strategy::PsiMean,
            branch_weight: 0.5,
            psi_threshold: 10.0,
            contraction: 0.5,
            max_refinements: 8,
            cooldown_steps: 100,
            prune_threshold: 1e-6,
            consistent_reseed: true,
        }
    }
}

impl RefinementPolicy {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.branch_weight > 0.0 && self.branch_weight < 1.0) {
            return fail("branch_weight must lie in (0, 1)");
        }
        if !(self.psi_threshold > 0.0 && self.psi_threshold < 100.0) {
            return fail("psi_threshold must lie in (0, 100)");
        }
        if !(self.contraction > 0.0 && self.contraction < 1.0) {
            return fail("contraction must lie in (0, 1)");
        }
        if !(self.prune_threshold >= 0.0 && self.prune_threshold < 1.0) {
            return fail("prune_threshold must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Regular lattice over the misalignment of every camera.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// One centre per camera, rotation vector in rad.
    pub centers: Vec<Vec3>,
    /// Half-width of the lattice on each axis, rad.
    pub half_width: f64,
    /// Odd number of nodes per axis.
    pub points_per_axis: usize,
}

impl GridSpec {
    pub fn single(center: Vec3, half_width: f64, points_per_axis: usize) -> Self {
        Self {
            centers: vec![center],
            half_width,
            points_per_axis,
        }
    }

    pub fn dual(c1: Vec3, c2: Vec3, half_width: f64, points_per_axis: usize) -> Self {
        Self {
            centers: vec![c1, c2],
            half_width,
            points_per_axis,
        }
    }

    /// Spacing between neighbouring nodes.
    pub fn step(&self) -> f64 {
        2.0 * self.half_width / (self.points_per_axis - 1) as f64
    }

    pub fn dimension(&self) -> usize {
        3 * self.centers.len()
    }

    pub fn size(&self) -> Option<usize> {
        self.points_per_axis.checked_pow(self.dimension() as u32)
    }

    pub fn validate(&self, budget: usize) -> Result<()> {
        let n = self.points_per_axis;
        if n < 3 || n % 2 == 0 {
            return Err(Error::InvalidGridResolution(n));
        }
        if self.centers.is_empty() {
            return Err(Error::InvalidConfig("grid needs at least one camera".into()));
        }
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(Error::InvalidConfig("grid half-width must be positive".into()));
        }
        match self.size() {
            Some(s) if s <= budget => Ok(()),
            s => Err(Error::GridTooLarge {
                requested: s.unwrap_or(usize::MAX),
                budget,
            }),
        }
    }

    /// Every lattice node; the last axis varies fastest.
    pub fn nodes(&self) -> Vec<Vec<Vec3>> {
        let n = self.points_per_axis;
        let d = self.dimension();
        let half = (n / 2) as i64;
        let step = self.step();
        let total = n.pow(d as u32);
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; d];
        for _ in 0..total {
            let node = self
                .centers
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    Vec3::from_fn(|a, _| c[a] + (idx[3 * k + a] as i64 - half) as f64 * step)
                })
                .collect();
            out.push(node);
            for axis in (0..d).rev() {
                idx[axis] += 1;
                if idx[axis] < n {
                    break;
                }
                idx[axis] = 0;
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Misalignment of each camera, rotation vector in rad.
    pub mu: Vec<Vec3>,
    pub q_mu: Vec<Quaternion>,
    pub filter: Mekf,
    pub weight: f64,
}

impl Hypothesis {
    fn new(mu: Vec<Vec3>, filter: Mekf, weight: f64) -> Self {
        let q_mu = mu.iter().map(Quaternion::from_rotation_vector).collect();
        Self {
            mu,
            q_mu,
            filter,
            weight,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversityMetric {
    /// Ψ in percent.
    pub psi: f64,
    /// Effective number of models `1/Σw²`.
    pub effective_models: f64,
}

pub fn diversity(weights: &[f64]) -> DiversityMetric {
    diversity_over(weights, weights.len())
}

/// Diversity relative to a lattice of `lattice_size` nodes, some of which may
/// have been pruned.
pub fn diversity_over(weights: &[f64], lattice_size: usize) -> DiversityMetric {
    let sum_sq: f64 = weights.iter().map(|w| w * w).sum();
    let effective = 1.0 / sum_sq;
    DiversityMetric {
        psi: 100.0 * effective / lattice_size.max(1) as f64,
        effective_models: effective,
    }
}

/// Log of the Gaussian density of residual `r` under covariance `cov`.
pub fn log_likelihood(r: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let m = r.len();
    let chol = Cholesky::new(cov.clone()).ok_or(Error::SingularInnovation {
        condition: f64::INFINITY,
    })?;
    let z = chol.l().solve_lower_triangular(r).ok_or(Error::SingularInnovation {
        condition: f64::INFINITY,
    })?;
    let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    Ok(-0.5 * (m as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + z.norm_squared()))
}

/// Gaussian density of `r` under covariance `cov`.
pub fn likelihood(r: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    Ok(log_likelihood(r, cov)?.exp())
}

/// Log-density for a diagonal covariance given by its variances.
pub fn log_likelihood_diagonal(r: &[f64], variances: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, v) in r.iter().zip(variances) {
        acc += x * x / v + v.ln() + (2.0 * std::f64::consts::PI).ln();
    }
    -0.5 * acc
}

/// Bayes update `w ← w·L / Σ w·L` from per-model log-likelihoods, with the
/// largest log-likelihood subtracted before exponentiation.
pub fn update_weights(weights: &mut [f64], log_likelihoods: &[f64]) -> Result<()> {
    if weights.len() != log_likelihoods.len() {
        return Err(Error::LengthMismatch {
            expected: weights.len(),
            found: log_likelihoods.len(),
        });
    }
    let shift = log_likelihoods
        .iter()
        .zip(weights.iter())
        .filter(|(_, w)| **w > 0.0)
        .map(|(l, _)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(Error::AllWeightsZero);
    }
    let mut total = 0.0;
    for (w, l) in weights.iter_mut().zip(log_likelihoods) {
        // A discarded model stays discarded whatever its likelihood.
        if *w == 0.0 {
            continue;
        }
        *w *= (l - shift).exp();
        if !w.is_finite() {
            return Err(Error::AllWeightsZero);
        }
        total += *w;
    }
    if !(total > 0.0) {
        return Err(Error::AllWeightsZero);
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok(())
}

/// Indices of weights strictly above `threshold`.
pub fn prune_indices(weights: &[f64], threshold: f64) -> Result<Vec<usize>> {
    let keep: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > threshold).collect();
    if keep.is_empty() {
        Err(Error::NothingSurvives { threshold })
    } else {
        Ok(keep)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RefinementDecision {
    None,
    Refine {
        center: Vec<Vec3>,
        /// Bank index whose filter seeds the new grid, or `None` to seed from
        /// the fused estimate.
        seed_model: Option<usize>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementEvent {
    pub step: usize,
    pub t: f64,
    pub strategy: Strategy,
    pub center: Vec<Vec3>,
    pub half_width: f64,
    pub psi_before: f64,
}

/// A bank of MEKFs, one per misalignment hypothesis.
#[derive(Clone, Debug)]
pub struct HypothesisGrid {
    pub hypotheses: Vec<Hypothesis>,
    pub spec: GridSpec,
    pub refinement_count: usize,
    /// Step at which the current lattice was built.
    pub built_at: usize,
}

impl HypothesisGrid {
    /// Builds the lattice with uniform weights and a copy of `seed` per node.
    pub fn build(spec: GridSpec, seed: &Mekf, budget: usize) -> Result<Self> {
        spec.validate(budget)?;
        let nodes = spec.nodes();
        let w = 1.0 / nodes.len() as f64;
        let hypotheses = nodes
            .into_iter()
            .map(|mu| Hypothesis::new(mu, seed.clone(), w))
            .collect();
        Ok(Self {
            hypotheses,
            spec,
            refinement_count: 0,
            built_at: 0,
        })
    }

    pub fn build_single(center: Vec3, step: f64, n: usize, seed: &Mekf, budget: usize) -> Result<Self> {
        let half = step * (n.saturating_sub(1) / 2) as f64;
        Self::build(GridSpec::single(center, half, n), seed, budget)
    }

    pub fn build_dual(c1: Vec3, c2: Vec3, step: f64, n: usize, seed: &Mekf, budget: usize) -> Result<Self> {
        let half = step * (n.saturating_sub(1) / 2) as f64;
        Self::build(GridSpec::dual(c1, c2, half, n), seed, budget)
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.hypotheses.iter().map(|h| h.weight).collect()
    }

    pub fn mus(&self) -> Vec<Vec<Vec3>> {
        self.hypotheses.iter().map(|h| h.mu.clone()).collect()
    }

    /// Diversity over the full lattice; pruned nodes count as zero weight.
    pub fn diversity(&self) -> DiversityMetric {
        let lattice = self.spec.size().unwrap_or(self.len());
        diversity_over(&self.weights(), lattice)
    }

    pub fn map_index(&self) -> usize {
        self.hypotheses
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.weight.total_cmp(&b.1.weight))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    pub fn weighted_mean_mu(&self) -> Vec<Vec3> {
        weighted_mean_mu(&self.mus(), &self.weights())
    }

    pub fn set_weights(&mut self, weights: &[f64]) {
        for (h, w) in self.hypotheses.iter_mut().zip(weights) {
            h.weight = *w;
        }
    }

    /// Bayes update from per-model log-likelihoods.
    pub fn update_weights(&mut self, log_likelihoods: &[f64]) -> Result<()> {
        let mut w = self.weights();
        update_weights(&mut w, log_likelihoods)?;
        self.set_weights(&w);
        Ok(())
    }

    /// Drops models at or below `threshold` and renormalizes. When nothing
    /// would survive, only the MAP model is kept. Returns the number removed.
    pub fn prune(&mut self, threshold: f64) -> usize {
        let weights = self.weights();
        let keep = prune_indices(&weights, threshold).unwrap_or_else(|_| vec![self.map_index()]);
        let removed = self.hypotheses.len() - keep.len();
        if removed == 0 {
            return 0;
        }
        let mut kept = Vec::with_capacity(keep.len());
        let mut drained: Vec<Option<Hypothesis>> = self.hypotheses.drain(..).map(Some).collect();
        for i in keep {
            kept.push(drained[i].take().expect("index kept once"));
        }
        let total: f64 = kept.iter().map(|h| h.weight).sum();
        for h in &mut kept {
            h.weight /= total;
        }
        self.hypotheses = kept;
        removed
    }

    /// Predict and TRIAD-update every model; returns the log-likelihood of
    /// each model's stacked pre-update residual.
    pub fn step_triad(
        &mut self,
        q_meas: &Quaternion,
        omega_meas: &Vec3,
        tuning: &FilterTuning,
        inertia: &InertiaMatrix,
        dt: f64,
    ) -> Result<Vec<f64>> {
        let r = tuning.triad_noise();
        let variances: Vec<f64> = r.diagonal().iter().copied().collect();
        self.hypotheses
            .par_iter_mut()
            .map(|h| {
                h.filter.predict(tuning, inertia, dt);
                let y = h.filter.update_triad(q_meas, omega_meas, &h.q_mu[0], tuning)?;
                Ok(log_likelihood_diagonal(y.as_slice(), &variances))
            })
            .collect()
    }

    /// Predict and line-of-sight-update every model; returns the
    /// log-likelihood of each model's stacked star and gyro residual.
    pub fn step_los(
        &mut self,
        y: &DVector<f64>,
        omega_meas: &Vec3,
        stars: &[Vec<Vec3>],
        tuning: &FilterTuning,
        inertia: &InertiaMatrix,
        dt: f64,
    ) -> Result<Vec<f64>> {
        let var = tuning.r_attitude * tuning.r_attitude;
        self.hypotheses
            .par_iter_mut()
            .map(|h| {
                h.filter.predict(tuning, inertia, dt);
                let cams: Vec<Camera<'_>> = h
                    .q_mu
                    .iter()
                    .zip(stars)
                    .map(|(q, s)| Camera {
                        misalignment: *q,
                        stars: s,
                    })
                    .collect();
                let r = h.filter.update_los(y, omega_meas, &cams, tuning)?;
                let mut variances = vec![var; r.len() - 3];
                variances.extend([tuning.r_gyro * tuning.r_gyro; 3]);
                Ok(log_likelihood_diagonal(r.as_slice(), &variances))
            })
            .collect()
    }

    pub fn fuse(&self, t: f64, previous: Option<&FusedEstimate>) -> Result<FusedEstimate> {
        let members: Vec<Member<'_>> = self
            .hypotheses
            .iter()
            .map(|h| Member {
                q: &h.filter.state.q,
                omega: &h.filter.state.omega,
                bias: &h.filter.state.bias,
                mu: &h.mu,
                cov: &h.filter.cov,
                weight: h.weight,
            })
            .collect();
        fuse(t, &members, previous)
    }

    /// Whether the policy asks for a refinement at `step`.
    pub fn check_refinement(&self, policy: &RefinementPolicy, step: usize) -> RefinementDecision {
        if self.refinement_count >= policy.max_refinements
            || step < self.built_at + policy.cooldown_steps
        {
            return RefinementDecision::None;
        }
        check_trigger(&self.weights(), &self.mus(), self.diversity().psi, policy)
    }

    /// Replaces the lattice with a contracted one around `center`, seeding
    /// every model from `seed` whose implied misalignment is `seed_mu`.
    pub fn refine(
        &mut self,
        center: Vec<Vec3>,
        policy: &RefinementPolicy,
        seed: &Mekf,
        seed_mu: &[Vec3],
        step: usize,
    ) -> Result<()> {
        if self.refinement_count >= policy.max_refinements {
            return Err(Error::BudgetExhausted(policy.max_refinements));
        }
        let spec = GridSpec {
            centers: center,
            half_width: self.spec.half_width * policy.contraction,
            points_per_axis: self.spec.points_per_axis,
        };
        let nodes = spec.nodes();
        let w = 1.0 / nodes.len() as f64;
        let seed_sensor: Vec<Quaternion> = seed_mu
            .iter()
            .map(|m| Quaternion::from_rotation_vector(m).multiply(&seed.state.q))
            .collect();
        let mut hypotheses = Vec::with_capacity(nodes.len());
        for mu in nodes {
            let mut h = Hypothesis::new(mu, seed.clone(), w);
            if policy.consistent_reseed {
                let implied: Vec<Quaternion> = h
                    .q_mu
                    .iter()
                    .zip(&seed_sensor)
                    .map(|(q_mu, s)| q_mu.conjugate().multiply(s))
                    .collect();
                let ws = vec![1.0 / implied.len() as f64; implied.len()];
                h.filter.state.q = markley_average(&implied, &ws, Some(&seed.state.q))
                    .unwrap_or(seed.state.q);
            }
            hypotheses.push(h);
        }
        self.hypotheses = hypotheses;
        self.spec = spec;
        self.refinement_count += 1;
        self.built_at = step;
        Ok(())
    }
}

/// Trigger predicate of each strategy, ignoring budget and cooldown.
pub fn check_trigger(
    weights: &[f64],
    mus: &[Vec<Vec3>],
    psi: f64,
    policy: &RefinementPolicy,
) -> RefinementDecision {
    let map = weights
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    match policy.strategy {
        Strategy::ClassicalMap => {
            if weights[map] > policy.branch_weight {
                RefinementDecision::Refine {
                    center: mus[map].clone(),
                    seed_model: Some(map),
                }
            } else {
                RefinementDecision::None
            }
        }
        Strategy::PsiMap | Strategy::PsiMean => {
            if psi >= policy.psi_threshold {
                return RefinementDecision::None;
            }
            let center = if policy.strategy == Strategy::PsiMap {
                mus[map].clone()
            } else {
                weighted_mean_mu(mus, weights)
            };
            RefinementDecision::Refine {
                center,
                seed_model: None,
            }
        }
    }
}
