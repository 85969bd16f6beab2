use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dynamics::{propagate_truth, InertiaMatrix, TorqueProfile, TruthState};
use crate::error::{Error, Result};
use crate::fusion::FusedEstimate;
use crate::mekf::{Mekf, NominalState, ATTITUDE};
use crate::mmae::{HypothesisGrid, RefinementDecision, RefinementEvent, Strategy};
use crate::rotations::{Quaternion, Vec3};
use crate::sensors::{
    measure_gyro, measure_los_dual, measure_vectors, triad_quaternion, wahba, NoiseModel, StarCatalog,
    TrackerConfig,
};

use super::config::{MisalignmentSpec, Mode, ScenarioConfig};
use super::metrics::{CampaignSummary, RunFailure};
use super::record::{RunRecord, StepSample};

const SETUP_STREAM: u64 = 0;
const TRACKER_STREAM: u64 = 1;
const GYRO_STREAM: u64 = 2;

/// Independent generator for one purpose within one run.
pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn random_attitude<R: Rng>(rng: &mut R) -> Quaternion {
    let g = |r: &mut R| r.sample::<f64, _>(StandardNormal);
    Quaternion::new(g(rng), g(rng), g(rng), g(rng))
}

/// Draws the per-run truth set-up: attitude, bias and misalignments.
fn draw_truth(config: &ScenarioConfig, rng: &mut ChaCha8Rng) -> (TruthState, Vec<Vec3>) {
    let q = random_attitude(rng);
    let bias = Vec3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal) * config.bias_sigma);
    let mu = match &config.misalignment {
        MisalignmentSpec::Fixed { values_deg } => values_deg
            .iter()
            .map(|v| Vec3::from(*v).map(f64::to_radians))
            .collect(),
        MisalignmentSpec::UniformOverGrid => {
            let spec = config.grid.spec();
            spec.centers
                .iter()
                .map(|c| {
                    Vec3::from_fn(|i, _| c[i] + rng.random_range(-spec.half_width..=spec.half_width))
                })
                .collect()
        }
    };
    let truth = TruthState {
        q,
        omega: Vec3::from(config.omega0_deg_s).map(f64::to_radians),
        bias,
        t: 0.0,
    };
    (truth, mu)
}

enum Measurement {
    Triad { q: Quaternion, gyro: Vec3 },
    Los { y: DVector<f64>, gyro: Vec3 },
}

struct Simulator<'a> {
    config: &'a ScenarioConfig,
    inertia: InertiaMatrix,
    profile: TorqueProfile,
    noise: NoiseModel,
    refs: [Vec3; 2],
    catalog: StarCatalog,
    trackers: Vec<TrackerConfig>,
    stars: Vec<Vec<Vec3>>,
    truth: TruthState,
    mu_true: Vec<Vec3>,
    q_mu_true: Vec<Quaternion>,
    tracker_rng: ChaCha8Rng,
    gyro_rng: ChaCha8Rng,
    next_rate_step: usize,
}

impl<'a> Simulator<'a> {
    fn new(config: &'a ScenarioConfig, seed: u64) -> Result<Self> {
        let mut setup = stream(seed, SETUP_STREAM);
        let (truth, mu_true) = draw_truth(config, &mut setup);
        let catalog = config.catalog()?;
        let trackers: Vec<TrackerConfig> = if config.mode == Mode::DualMisalignment {
            config
                .tracker_stars
                .iter()
                .zip(&mu_true)
                .map(|(s, m)| TrackerConfig {
                    star_indices: s.clone(),
                    misalignment: [m.x, m.y, m.z],
                })
                .collect()
        } else {
            Vec::new()
        };
        let stars = trackers
            .iter()
            .map(|t| catalog.units(&t.star_indices))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            inertia: config.inertia()?,
            profile: config.torque_profile(),
            noise: config.effective_noise_model(),
            refs: config.reference_units(),
            catalog,
            trackers,
            stars,
            q_mu_true: mu_true.iter().map(Quaternion::from_rotation_vector).collect(),
            truth,
            mu_true,
            tracker_rng: stream(seed, TRACKER_STREAM),
            gyro_rng: stream(seed, GYRO_STREAM),
            next_rate_step: 0,
        })
    }

    fn advance(&mut self) {
        let steps = &self.config.rate_steps;
        while let Some(s) = steps.get(self.next_rate_step) {
            if s.t > self.truth.t + 1e-9 {
                break;
            }
            self.truth.omega += Vec3::from(s.delta_deg_s).map(f64::to_radians);
            self.next_rate_step += 1;
        }
        self.truth = propagate_truth(&self.truth, &self.inertia, &self.profile, self.config.dt);
    }

    fn measure(&mut self) -> Result<Measurement> {
        let gyro = measure_gyro(
            &self.truth.omega,
            &self.truth.bias,
            self.config.gyro_sigma,
            &mut self.gyro_rng,
        );
        if self.config.mode == Mode::DualMisalignment {
            let y = measure_los_dual(
                &self.truth.q,
                &self.trackers,
                &self.catalog,
                self.config.sensor_sigma,
                &mut self.tracker_rng,
            )?;
            return Ok(Measurement::Los { y, gyro });
        }
        let sensor = self.q_mu_true[0].multiply(&self.truth.q).to_dcm();
        let obs = measure_vectors(
            self.noise,
            &sensor,
            &self.refs,
            self.config.sensor_sigma,
            &mut self.tracker_rng,
        );
        let q = triad_quaternion(&self.refs, &obs)?;
        Ok(Measurement::Triad { q, gyro })
    }

    /// Body attitude implied by a first measurement under the given
    /// misalignments: TRIAD for one tracker, least squares over every star
    /// for two.
    fn initial_attitude(&self, m: &Measurement, centers: &[Vec3]) -> Result<Quaternion> {
        match m {
            Measurement::Triad { q, .. } => {
                let c = centers.first().copied().unwrap_or_else(Vec3::zeros);
                Ok(Quaternion::from_rotation_vector(&c).conjugate().multiply(q))
            }
            Measurement::Los { y, .. } => {
                let mut refs = Vec::new();
                let mut body = Vec::new();
                for (k, stars) in self.stars.iter().enumerate() {
                    let c = centers.get(k).copied().unwrap_or_else(Vec3::zeros);
                    let to_body = Quaternion::from_rotation_vector(&c).to_dcm().transpose();
                    for r in stars {
                        let row = 3 * refs.len();
                        body.push(to_body.apply(&Vec3::new(y[row], y[row + 1], y[row + 2])));
                        refs.push(*r);
                    }
                }
                Ok(wahba(&refs, &body)?.to_quaternion())
            }
        }
    }

    fn sample(&self, step: usize, est: &FusedEstimate, mu_sigma: Vec<Vec3>, bank: BankView) -> StepSample {
        let mut sigma = [0.0; 9];
        for (i, s) in sigma.iter_mut().enumerate() {
            let var = est.cov[(i, i)] + est.state_spread[i];
            let scale = if i >= ATTITUDE { 4.0 } else { 1.0 };
            *s = scale * var.max(0.0).sqrt();
        }
        StepSample {
            step,
            t: self.truth.t,
            q_true: self.truth.q,
            omega_true: self.truth.omega,
            bias_true: self.truth.bias,
            q_est: est.q,
            omega_est: est.omega,
            bias_est: est.bias,
            mu_est: est.mu.clone(),
            sigma,
            mu_sigma,
            psi: bank.psi,
            models: bank.models,
            map_weight: bank.map_weight,
            map_mu: bank.map_mu,
            refined: bank.refined,
        }
    }
}

/// Bank quantities stored with a sample.
struct BankView {
    psi: f64,
    models: usize,
    map_weight: f64,
    map_mu: Vec<Vec3>,
    refined: bool,
}

impl BankView {
    fn single() -> Self {
        Self {
            psi: 100.0,
            models: 1,
            map_weight: 1.0,
            map_mu: vec![Vec3::zeros()],
            refined: false,
        }
    }

    fn of(grid: &HypothesisGrid, refined: bool) -> Self {
        let map = &grid.hypotheses[grid.map_index()];
        Self {
            psi: grid.diversity().psi,
            models: grid.len(),
            map_weight: map.weight,
            map_mu: map.mu.clone(),
            refined,
        }
    }
}

fn gyro_of(m: &Measurement) -> Vec3 {
    match m {
        Measurement::Triad { gyro, .. } | Measurement::Los { gyro, .. } => *gyro,
    }
}

fn single_filter_estimate(t: f64, filter: &Mekf) -> FusedEstimate {
    FusedEstimate {
        t,
        q: filter.state.q,
        omega: filter.state.omega,
        bias: filter.state.bias,
        mu: vec![Vec3::zeros()],
        cov: filter.cov,
        mu_spread: vec![Vec3::zeros()],
        state_spread: [0.0; 9],
    }
}

/// Simulates one run with seed `config.seed + run_index`.
pub fn run_single(config: &ScenarioConfig, run_index: usize) -> Result<RunRecord> {
    config.validate()?;
    let seed = config.seed.wrapping_add(run_index as u64);
    let mut sim = Simulator::new(config, seed)?;
    let steps = config.steps();
    let tuning = config.tuning;
    let policy = config.policy;
    let spec = config.grid.spec();

    let first = sim.measure().map_err(|e| e.at_step(0))?;
    let centers = if config.mode.uses_bank() {
        spec.centers.clone()
    } else {
        vec![Vec3::zeros()]
    };
    let q0 = sim.initial_attitude(&first, &centers).map_err(|e| e.at_step(0))?;
    let seed_filter = Mekf::new(
        NominalState {
            q: q0,
            omega: gyro_of(&first),
            bias: Vec3::zeros(),
        },
        tuning.initial_covariance(),
    );

    let decimation = config.decimation.max(1);
    let keep = |k: usize| k % decimation == 0 || k == steps;
    let mut samples = Vec::with_capacity(steps / decimation + 2);
    let mut refinement_samples = Vec::new();
    let mut events = Vec::new();

    if !config.mode.uses_bank() {
        let mut filter = seed_filter;
        let est = single_filter_estimate(0.0, &filter);
        samples.push(sim.sample(0, &est, vec![Vec3::zeros()], BankView::single()));
        for k in 1..=steps {
            sim.advance();
            let m = sim.measure().map_err(|e| e.at_step(k))?;
            filter.predict(&tuning, &sim.inertia, config.dt);
            if let Measurement::Triad { q, gyro } = &m {
                filter
                    .update_triad(q, gyro, &Quaternion::IDENTITY, &tuning)
                    .map_err(|e| e.at_step(k))?;
            }
            if keep(k) {
                let est = single_filter_estimate(sim.truth.t, &filter);
                samples.push(sim.sample(k, &est, vec![Vec3::zeros()], BankView::single()));
            }
        }
        return Ok(RunRecord {
            run_index,
            seed,
            mode: config.mode,
            strategy: None,
            mu_true: sim.mu_true.clone(),
            samples,
            refinement_samples,
            events,
        });
    }

    let mut grid = HypothesisGrid::build(spec, &seed_filter, config.grid.budget)?;
    if policy.consistent_reseed {
        // Each model reads the first measurement through its own misalignment.
        for h in &mut grid.hypotheses {
            h.filter.state.q = sim.initial_attitude(&first, &h.mu).map_err(|e| e.at_step(0))?;
        }
    }
    let mut fused = grid.fuse(0.0, None)?;
    let mu_sigma = mixture_mu_sigma(&fused, grid.spec.step());
    samples.push(sim.sample(0, &fused, mu_sigma, BankView::of(&grid, false)));

    for k in 1..=steps {
        let at = |e: Error| e.at_step(k);
        sim.advance();
        let m = sim.measure().map_err(at)?;
        let ll = match &m {
            Measurement::Triad { q, gyro } => {
                grid.step_triad(q, gyro, &tuning, &sim.inertia, config.dt)
            }
            Measurement::Los { y, gyro } => {
                grid.step_los(y, gyro, &sim.stars, &tuning, &sim.inertia, config.dt)
            }
        }
        .map_err(at)?;
        grid.update_weights(&ll).map_err(at)?;

        let psi_before = grid.diversity().psi;
        let refined = match grid.check_refinement(&policy, k) {
            RefinementDecision::Refine { center, seed_model } => {
                let (seed, seed_mu) = match seed_model {
                    Some(j) => {
                        let h = &grid.hypotheses[j];
                        (h.filter.clone(), h.mu.clone())
                    }
                    None => {
                        let f = grid.fuse(sim.truth.t, Some(&fused)).map_err(at)?;
                        let state = NominalState {
                            q: f.q,
                            omega: f.omega,
                            bias: f.bias,
                        };
                        (Mekf::new(state, f.cov), f.mu.clone())
                    }
                };
                grid.refine(center.clone(), &policy, &seed, &seed_mu, k)
                    .map_err(at)?;
                events.push(RefinementEvent {
                    step: k,
                    t: sim.truth.t,
                    strategy: policy.strategy,
                    center,
                    half_width: grid.spec.half_width,
                    psi_before,
                });
                true
            }
            RefinementDecision::None => {
                grid.prune(policy.prune_threshold);
                false
            }
        };

        fused = grid.fuse(sim.truth.t, Some(&fused)).map_err(at)?;
        if keep(k) || refined {
            let mu_sigma = mixture_mu_sigma(&fused, grid.spec.step());
            let sample = sim.sample(k, &fused, mu_sigma, BankView::of(&grid, refined));
            if refined {
                refinement_samples.push(sample.clone());
            }
            if keep(k) {
                samples.push(sample);
            }
        }
    }

    Ok(RunRecord {
        run_index,
        seed,
        mode: config.mode,
        strategy: Some(policy.strategy),
        mu_true: sim.mu_true,
        samples,
        refinement_samples,
        events,
    })
}

/// Misalignment uncertainty: the weighted spread of the bank plus the
/// variance of a uniform quantization error over one lattice cell.
fn mixture_mu_sigma(est: &FusedEstimate, step: f64) -> Vec<Vec3> {
    let quant = step * step / 12.0;
    est.mu_spread
        .iter()
        .map(|s| s.map(|v| (v + quant).sqrt()))
        .collect()
}

/// Completed runs in run order and their aggregate, which lists failures.
#[derive(Clone, Debug)]
pub struct Campaign {
    pub records: Vec<RunRecord>,
    pub summary: CampaignSummary,
}

/// Runs `config.runs` seeds in parallel; aggregation follows run order so the
/// result does not depend on the worker count. Fails only if every run fails.
pub fn run_monte_carlo(config: &ScenarioConfig) -> Result<Campaign> {
    config.validate()?;
    let results: Vec<Result<RunRecord>> = (0..config.runs)
        .into_par_iter()
        .map(|i| run_single(config, i))
        .collect();
    let mut records = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    let mut first_error = None;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => {
                failures.push(RunFailure {
                    run_index: i,
                    message: e.to_string(),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    if records.is_empty() {
        return Err(first_error.unwrap_or(Error::InvalidConfig("no runs requested".into())));
    }
    let summary = CampaignSummary::from_records(&records, failures, config.transient_fraction)?;
    Ok(Campaign { records, summary })
}

/// Runs the same seeds under every refinement strategy, in `Strategy::ALL`
/// order.
pub fn compare_strategies(config: &ScenarioConfig) -> Result<Vec<(Strategy, Campaign)>> {
    if !config.mode.uses_bank() {
        return Err(Error::InvalidConfig(
            "strategy comparison needs a hypothesis bank".into(),
        ));
    }
    Strategy::ALL
        .into_iter()
        .map(|s| Ok((s, run_monte_carlo(&config.clone().with_strategy(s))?)))
        .collect()
}
