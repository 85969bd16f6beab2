use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{InertiaMatrix, TorqueProfile};
use crate::error::{Error, Result};
use crate::mekf::FilterTuning;
use crate::mmae::{GridSpec, RefinementPolicy, Strategy};
use crate::rotations::{Mat3, Vec3};
use crate::sensors::{NoiseModel, StarCatalog, TrackerConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// One MEKF on TRIAD attitudes with additive vector noise, no misalignment.
    MekfOnlyAdditive,
    /// One MEKF on TRIAD attitudes with multiplicative vector noise.
    MekfOnlyMultiplicative,
    /// Bank over one tracker's misalignment, TRIAD + gyro measurements.
    SingleMisalignment,
    /// Bank over two trackers' misalignments, line-of-sight + gyro measurements.
    DualMisalignment,
}

impl Mode {
    pub fn cameras(&self) -> usize {
        match self {
            Mode::DualMisalignment => 2,
            _ => 1,
        }
    }

    pub fn uses_bank(&self) -> bool {
        matches!(self, Mode::SingleMisalignment | Mode::DualMisalignment)
    }
}

/// Viscous braking torque switched on at `onset`; zero damping disables it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Braking {
    /// Coefficient of `τ = −Dω`, N·m·s.
    pub damping: f64,
    /// Switch-on time, s.
    pub onset: f64,
}

impl Braking {
    pub const OFF: Braking = Braking {
        damping: 0.0,
        onset: 0.0,
    };
}

/// Instantaneous change of the true body rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateStep {
    /// Time of the change, s.
    pub t: f64,
    /// Added body rate, deg/s.
    pub delta_deg_s: [f64; 3],
}

/// How each run draws its true misalignments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MisalignmentSpec {
    /// Same rotation vector(s) for every run, deg.
    Fixed { values_deg: Vec<[f64; 3]> },
    /// Uniform per axis over the initial grid span.
    UniformOverGrid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(default)]
pub struct GridConfig {
    /// Initial grid centre per camera, deg.
    pub center_deg: Vec<[f64; 3]>,
    /// Half-width per axis of the initial grid, deg.
    pub half_width_deg: f64,
    pub points_per_axis: usize,
    /// Largest number of models a grid may hold.
    pub budget: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            center_deg: vec![[0.0; 3]],
            half_width_deg: 0.5,
            points_per_axis: 7,
            budget: 4096,
        }
    }
}

impl GridConfig {
    pub fn spec(&self) -> GridSpec {
        GridSpec {
            centers: self
                .center_deg
                .iter()
                .map(|c| Vec3::from(*c).map(f64::to_radians))
                .collect(),
            half_width: self.half_width_deg.to_radians(),
            points_per_axis: self.points_per_axis,
        }
    }
}

/// Everything needed to reproduce a run or campaign.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(default)]
pub struct ScenarioConfig {
    pub mode: Mode,
    /// Simulated time span, s.
    pub duration: f64,
    /// Measurement and propagation step, s.
    pub dt: f64,
    /// Principal moments of inertia, kg·m².
    pub inertia_diag: [f64; 3],
    /// Initial true body rate, deg/s.
    pub omega0_deg_s: [f64; 3],
    pub braking: Braking,
    pub rate_steps: Vec<RateStep>,
    /// Standard deviation of each true gyro-bias component, rad/s.
    pub bias_sigma: f64,
    /// Star-tracker noise law for TRIAD-based modes.
    pub noise_model: NoiseModel,
    /// Star-tracker noise standard deviation used by the simulator.
    pub sensor_sigma: f64,
    /// Gyro noise standard deviation used by the simulator, rad/s.
    pub gyro_sigma: f64,
    /// Inertial directions observed for TRIAD in single-tracker modes.
    pub reference_vectors: [[f64; 3]; 2],
    /// CSV star catalog; the built-in six-star catalog when absent.
    pub catalog: Option<PathBuf>,
    /// Catalog indices observed by each tracker in dual mode.
    pub tracker_stars: Vec<Vec<usize>>,
    pub misalignment: MisalignmentSpec,
    pub tuning: FilterTuning,
    pub grid: GridConfig,
    pub policy: RefinementPolicy,
    /// Number of Monte Carlo runs.
    pub runs: usize,
    /// Run `i` uses seed `seed + i`.
    pub seed: u64,
    /// Keep every k-th step in CSV artifacts.
    pub decimation: usize,
    /// Fraction of the run excluded from coverage statistics.
    pub transient_fraction: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            mode: Mode::SingleMisalignment,
            duration: 5000.0,
            dt: 0.5,
            inertia_diag: [100.0, 60.0, 50.0],
            omega0_deg_s: [3.0, 4.4, -5.0],
            braking: Braking {
                damping: 0.6,
                onset: 4100.0,
            },
            rate_steps: Vec::new(),
            bias_sigma: 1e-3,
            noise_model: NoiseModel::Additive,
            sensor_sigma: 8.73e-4,
            gyro_sigma: 5e-4,
            reference_vectors: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            catalog: None,
            tracker_stars: vec![vec![0, 1, 2], vec![3, 4, 5]],
            misalignment: MisalignmentSpec::UniformOverGrid,
            tuning: FilterTuning::default(),
            grid: GridConfig::default(),
            policy: RefinementPolicy::default(),
            runs: 20,
            seed: 1,
            decimation: 10,
            transient_fraction: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    SinglePaper,
    SingleDesk,
    DualPaper,
    DualDesk,
    MekfAdditive,
    MekfMultiplicative,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::SinglePaper,
        Preset::SingleDesk,
        Preset::DualPaper,
        Preset::DualDesk,
        Preset::MekfAdditive,
        Preset::MekfMultiplicative,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::SinglePaper => "single-paper",
            Preset::SingleDesk => "single-desk",
            Preset::DualPaper => "dual-paper",
            Preset::DualDesk => "dual-desk",
            Preset::MekfAdditive => "mekf-additive",
            Preset::MekfMultiplicative => "mekf-multiplicative",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown preset {s:?}")))
    }
}

/// Table defaults except for rate process noise, raised so the filter can
/// follow the unmodeled braking torque.
fn braking_tuning() -> FilterTuning {
    FilterTuning {
        q_rate: BRAKING_RATE_NOISE,
        ..FilterTuning::default()
    }
}

/// Rate process noise of the braking presets, rad/s².
pub const BRAKING_RATE_NOISE: f64 = 1e-4;

fn maneuver_schedule() -> Vec<RateStep> {
    [
        (300.0, [2.0, 0.0, 0.0]),
        (600.0, [0.0, -2.0, 0.0]),
        (900.0, [0.0, 0.0, 2.0]),
        (1200.0, [-2.0, 0.0, 0.0]),
    ]
    .into_iter()
    .map(|(t, d)| RateStep { t, delta_deg_s: d })
    .collect()
}

impl ScenarioConfig {
    pub fn preset(preset: Preset) -> Self {
        let base = Self {
            tuning: braking_tuning(),
            ..Self::default()
        };
        match preset {
            Preset::SinglePaper => Self { runs: 100, ..base },
            Preset::SingleDesk => base,
            Preset::DualPaper => Self {
                mode: Mode::DualMisalignment,
                duration: 250_000.0,
                braking: Braking {
                    damping: 0.6,
                    onset: 230_000.0,
                },
                grid: GridConfig {
                    center_deg: vec![[0.0; 3], [0.0; 3]],
                    half_width_deg: 2.0,
                    points_per_axis: 3,
                    budget: 4096,
                },
                runs: 100,
                decimation: 100,
                ..base
            },
            Preset::DualDesk => Self {
                duration: 20_000.0,
                braking: Braking {
                    damping: 0.6,
                    onset: 18_000.0,
                },
                runs: 1,
                decimation: 20,
                ..Self::preset(Preset::DualPaper)
            },
            Preset::MekfAdditive => Self {
                mode: Mode::MekfOnlyAdditive,
                tuning: FilterTuning::default(),
                duration: 1800.0,
                braking: Braking::OFF,
                rate_steps: maneuver_schedule(),
                noise_model: NoiseModel::Additive,
                misalignment: MisalignmentSpec::Fixed {
                    values_deg: vec![[0.0; 3]],
                },
                ..base
            },
            Preset::MekfMultiplicative => Self {
                mode: Mode::MekfOnlyMultiplicative,
                noise_model: NoiseModel::Multiplicative,
                ..Self::preset(Preset::MekfAdditive)
            },
        }
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.policy.strategy = strategy;
        self
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn inertia(&self) -> Result<InertiaMatrix> {
        InertiaMatrix::new(Mat3::from_diagonal(&Vec3::from(self.inertia_diag)))
    }

    pub fn torque_profile(&self) -> TorqueProfile {
        match self.braking {
            b if b.damping > 0.0 => TorqueProfile::braking(b.damping, b.onset),
            _ => TorqueProfile::torque_free(),
        }
    }

    /// Noise law actually applied to star-tracker vectors.
    pub fn effective_noise_model(&self) -> NoiseModel {
        match self.mode {
            Mode::MekfOnlyAdditive => NoiseModel::Additive,
            Mode::MekfOnlyMultiplicative => NoiseModel::Multiplicative,
            _ => self.noise_model,
        }
    }

    pub fn catalog(&self) -> Result<StarCatalog> {
        match &self.catalog {
            Some(path) => StarCatalog::from_path(path),
            None => Ok(StarCatalog::default_dual()),
        }
    }

    pub fn reference_units(&self) -> [Vec3; 2] {
        [
            Vec3::from(self.reference_vectors[0]).normalize(),
            Vec3::from(self.reference_vectors[1]).normalize(),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return fail(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.duration >= self.dt) {
            return fail(format!("duration {} shorter than dt {}", self.duration, self.dt));
        }
        if self.runs == 0 {
            return fail("runs must be at least 1".into());
        }
        if self.decimation == 0 {
            return fail("decimation must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.transient_fraction) {
            return fail("transient_fraction must lie in [0, 1)".into());
        }
        if !(self.bias_sigma >= 0.0 && self.sensor_sigma >= 0.0 && self.gyro_sigma >= 0.0) {
            return fail("simulated noise levels must be non-negative".into());
        }
        if !(self.braking.damping >= 0.0 && self.braking.onset.is_finite()) {
            return fail("braking damping must be non-negative".into());
        }
        self.inertia()?;
        self.torque_profile().validate()?;
        self.tuning.validate()?;
        self.policy.validate()?;
        let [a, b] = self.reference_units();
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return fail("reference vectors must be non-zero".into());
        }
        if a.cross(&b).norm() < 30f64.to_radians().sin() {
            return fail("reference vectors must be at least 30 degrees apart".into());
        }
        let cams = self.mode.cameras();
        if let MisalignmentSpec::Fixed { values_deg } = &self.misalignment {
            if values_deg.len() != cams {
                return fail(format!(
                    "{} fixed misalignments given for {} tracker(s)",
                    values_deg.len(),
                    cams
                ));
            }
        }
        if self.mode.uses_bank() {
            if self.grid.center_deg.len() != cams {
                return fail(format!(
                    "{} grid centres given for {} tracker(s)",
                    self.grid.center_deg.len(),
                    cams
                ));
            }
            self.grid.spec().validate(self.grid.budget)?;
        }
        if self.mode == Mode::DualMisalignment {
            if self.tracker_stars.len() != 2 {
                return fail("dual mode needs star lists for exactly two trackers".into());
            }
            let catalog = self.catalog()?;
            for stars in &self.tracker_stars {
                TrackerConfig {
                    star_indices: stars.clone(),
                    misalignment: [0.0; 3],
                }
                .validate(&catalog)?;
            }
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text),
            _ => Self::from_toml_str(&text),
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }
}
