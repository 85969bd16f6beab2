//! Nine-state multiplicative extended Kalman filter.
//!
//! The error state is ordered `[δω; δb; δθ]`: rate error, gyro-bias error and
//! the MRP of the left attitude error `q_true = δq(δθ) ⊗ q̂`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Matrix6, OMatrix, SMatrix, SVector, U9};
use serde::{Deserialize, Serialize};

use crate::dynamics::{propagate_nominal, InertiaMatrix};
use crate::error::{Error, Result};
use crate::rotations::{skew, Mat3, Mrp, Quaternion, Vec3};

pub type Mat9 = SMatrix<f64, 9, 9>;
pub type Vec9 = SVector<f64, 9>;
pub type Vec6 = SVector<f64, 6>;
type Mat6x9 = SMatrix<f64, 6, 9>;

/// Offsets of the error-state blocks.
pub const RATE: usize = 0;
pub const BIAS: usize = 3;
pub const ATTITUDE: usize = 6;

/// Largest innovation-covariance condition estimate accepted by an update.
pub const MAX_INNOVATION_CONDITION: f64 = 1e12;

/// Filter noise levels, all given as standard deviations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterTuning {
    /// Initial rate uncertainty, rad/s.
    pub p0_rate: f64,
    /// Initial bias uncertainty, rad/s.
    pub p0_bias: f64,
    /// Initial attitude uncertainty, MRP.
    pub p0_attitude: f64,
    /// Rate process noise, rad/s².
    pub q_rate: f64,
    /// Bias drift, rad/s².
    pub q_bias: f64,
    /// Attitude process noise, MRP.
    pub q_attitude: f64,
    /// Star-tracker noise: attitude MRP for TRIAD updates, unit-vector
    /// component for line-of-sight updates.
    pub r_attitude: f64,
    /// Gyro noise, rad/s.
    pub r_gyro: f64,
    /// Keep the `−[ω̂]ₓ` attitude transport term in the error dynamics.
    /// Dropping it is only safe at low spin rates.
    #[serde(default = "enabled")]
    pub attitude_transport: bool,
}

fn enabled() -> bool {
    true
}

impl Default for FilterTuning {
    fn default() -> Self {
        Self {
            p0_rate: 0.01,
            p0_bias: 0.001,
            p0_attitude: 1.0,
            q_rate: 1e-6,
            q_bias: 5e-8,
            q_attitude: 5e-7,
            r_attitude: 8.73e-4,
            r_gyro: 5e-4,
            attitude_transport: true,
        }
    }
}

fn block_diagonal(a: f64, b: f64, c: f64) -> Mat9 {
    let mut d = Vec9::zeros();
    d.fixed_rows_mut::<3>(RATE).fill(a * a);
    d.fixed_rows_mut::<3>(BIAS).fill(b * b);
    d.fixed_rows_mut::<3>(ATTITUDE).fill(c * c);
    Mat9::from_diagonal(&d)
}

impl FilterTuning {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.p0_rate,
            self.p0_bias,
            self.p0_attitude,
            self.q_rate,
            self.q_bias,
            self.q_attitude,
            self.r_attitude,
            self.r_gyro,
        ];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidConfig(
                "filter tuning standard deviations must be positive and finite".into(),
            ))
        }
    }

    pub fn initial_covariance(&self) -> Mat9 {
        block_diagonal(self.p0_rate, self.p0_bias, self.p0_attitude)
    }

    pub fn process_noise(&self) -> Mat9 {
        block_diagonal(self.q_rate, self.q_bias, self.q_attitude)
    }

    /// Measurement covariance of the stacked `[attitude MRP; gyro]` residual.
    pub fn triad_noise(&self) -> Matrix6<f64> {
        let a = self.r_attitude * self.r_attitude;
        let g = self.r_gyro * self.r_gyro;
        Matrix6::from_diagonal(&Vec6::new(a, a, a, g, g, g))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NominalState {
    pub q: Quaternion,
    pub omega: Vec3,
    pub bias: Vec3,
}

/// Continuous error dynamics. The rate block is the Jacobian of Euler's
/// torque-free equations; attitude error is driven by rate error with gain
/// `−¼` and, when `transport` is set, rotated by `−[ω̂]ₓ`.
pub fn error_dynamics_matrix(omega_hat: &Vec3, inertia: &InertiaMatrix, transport: bool) -> Mat9 {
    let j = inertia.matrix();
    let f_ww = -inertia.inverse() * (skew(omega_hat) * j - skew(&(j * omega_hat)));
    let mut f = Mat9::zeros();
    f.fixed_view_mut::<3, 3>(RATE, RATE).copy_from(&f_ww);
    f.fixed_view_mut::<3, 3>(ATTITUDE, RATE)
        .copy_from(&(-0.25 * Mat3::identity()));
    if transport {
        f.fixed_view_mut::<3, 3>(ATTITUDE, ATTITUDE)
            .copy_from(&(-skew(omega_hat)));
    }
    f
}

/// Discrete transition matrix of the block-lower-triangular error dynamics.
///
/// The bias block is identity; rate and attitude blocks and their coupling
/// come from one 6×6 exponential of `[[A, 0], [C, B]]·dt`.
pub fn transition_matrix(f: &Mat9, dt: f64) -> Mat9 {
    let mut aug = Matrix6::<f64>::zeros();
    aug.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(f.fixed_view::<3, 3>(RATE, RATE) * dt));
    aug.fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&(f.fixed_view::<3, 3>(ATTITUDE, RATE) * dt));
    aug.fixed_view_mut::<3, 3>(3, 3)
        .copy_from(&(f.fixed_view::<3, 3>(ATTITUDE, ATTITUDE) * dt));
    let e = aug.exp();
    let mut phi = Mat9::identity();
    phi.fixed_view_mut::<3, 3>(RATE, RATE)
        .copy_from(&e.fixed_view::<3, 3>(0, 0));
    phi.fixed_view_mut::<3, 3>(ATTITUDE, RATE)
        .copy_from(&e.fixed_view::<3, 3>(3, 0));
    phi.fixed_view_mut::<3, 3>(ATTITUDE, ATTITUDE)
        .copy_from(&e.fixed_view::<3, 3>(3, 3));
    phi
}

/// Per-star line-of-sight Jacobian block `[0, 0, −4[v̂]ₓ C_μ]`.
pub fn los_jacobian(v_hat: &Vec3, c_mu: &Mat3) -> SMatrix<f64, 3, 9> {
    let mut h = SMatrix::<f64, 3, 9>::zeros();
    h.fixed_view_mut::<3, 3>(0, ATTITUDE)
        .copy_from(&(-4.0 * skew(v_hat) * c_mu));
    h
}

/// One tracker's view for a line-of-sight update: its hypothesised
/// misalignment and the inertial directions of the stars it sees.
#[derive(Clone, Copy, Debug)]
pub struct Camera<'a> {
    pub misalignment: Quaternion,
    pub stars: &'a [Vec3],
}

fn symmetrize(p: &Mat9) -> Mat9 {
    0.5 * (p + p.transpose())
}

fn condition_estimate(l: &DMatrix<f64>) -> f64 {
    let d = l.diagonal();
    let ratio = d.max() / d.min();
    ratio * ratio
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mekf {
    pub state: NominalState,
    pub cov: Mat9,
}

impl Mekf {
    pub fn new(state: NominalState, cov: Mat9) -> Self {
        Self { state, cov }
    }

    /// Propagates the nominal state with RK4 on the torque-free model and the
    /// covariance with `ΦPΦᵀ + Q·dt`.
    pub fn predict(&mut self, tuning: &FilterTuning, inertia: &InertiaMatrix, dt: f64) {
        let f = error_dynamics_matrix(&self.state.omega, inertia, tuning.attitude_transport);
        let phi = transition_matrix(&f, dt);
        let (q, omega) = propagate_nominal(&self.state.q, &self.state.omega, inertia, dt);
        self.state.q = q;
        self.state.omega = omega;
        self.cov = symmetrize(&(phi * self.cov * phi.transpose() + tuning.process_noise() * dt));
    }

    /// Residual of a TRIAD attitude and gyro reading against the prediction
    /// made with misalignment `q_mu`.
    pub fn triad_residual(&self, q_meas: &Quaternion, omega_meas: &Vec3, q_mu: &Quaternion) -> Result<Vec6> {
        let q_exp = q_mu.multiply(&self.state.q);
        let s = q_meas.multiply(&q_exp.conjugate()).to_mrp()?;
        let w = omega_meas - (self.state.omega + self.state.bias);
        Ok(Vec6::new(s.0.x, s.0.y, s.0.z, w.x, w.y, w.z))
    }

    /// TRIAD + gyro update. Returns the pre-update residual.
    pub fn update_triad(
        &mut self,
        q_meas: &Quaternion,
        omega_meas: &Vec3,
        q_mu: &Quaternion,
        tuning: &FilterTuning,
    ) -> Result<Vec6> {
        let y = self.triad_residual(q_meas, omega_meas, q_mu)?;
        let mut h = Mat6x9::zeros();
        h.fixed_view_mut::<3, 3>(0, ATTITUDE).fill_with_identity();
        h.fixed_view_mut::<3, 3>(3, RATE).fill_with_identity();
        h.fixed_view_mut::<3, 3>(3, BIAS).fill_with_identity();
        let r = tuning.triad_noise();

        let ph_t = self.cov * h.transpose();
        let s = h * ph_t + r;
        let chol = Cholesky::new(s).ok_or(Error::SingularInnovation {
            condition: f64::INFINITY,
        })?;
        let cond = condition_estimate(&DMatrix::from_iterator(
            6,
            6,
            chol.l_dirty().iter().copied(),
        ));
        if !(cond <= MAX_INNOVATION_CONDITION) {
            return Err(Error::SingularInnovation { condition: cond });
        }
        let k = chol.solve(&ph_t.transpose()).transpose();
        let dx = k * y;
        let ikh = Mat9::identity() - k * h;
        self.cov = symmetrize(&(ikh * self.cov * ikh.transpose() + k * r * k.transpose()));
        self.apply_correction(&dx);
        Ok(y)
    }

    /// Predicted sensor-frame directions for each camera, stacked.
    pub fn predict_los(&self, cameras: &[Camera<'_>]) -> Vec<Vec3> {
        let mut out = Vec::new();
        for cam in cameras {
            let c = cam.misalignment.multiply(&self.state.q).to_dcm();
            out.extend(cam.stars.iter().map(|v| c.apply(v)));
        }
        out
    }

    /// Stacked line-of-sight + gyro update. `y` holds the measured directions
    /// of every camera's stars in order. Returns the pre-update residual, star
    /// rows first and the three gyro rows last.
    pub fn update_los(
        &mut self,
        y: &DVector<f64>,
        omega_meas: &Vec3,
        cameras: &[Camera<'_>],
        tuning: &FilterTuning,
    ) -> Result<DVector<f64>> {
        let v_hat = self.predict_los(cameras);
        let n_star_rows = 3 * v_hat.len();
        if y.len() != n_star_rows {
            return Err(Error::LengthMismatch {
                expected: n_star_rows,
                found: y.len(),
            });
        }
        let m = n_star_rows + 3;
        let mut h = OMatrix::<f64, Dyn, U9>::zeros(m);
        let mut resid = DVector::zeros(m);
        let mut row = 0;
        let mut star = 0;
        for cam in cameras {
            let c_mu = *cam.misalignment.to_dcm().matrix();
            for _ in cam.stars {
                let v = &v_hat[star];
                h.fixed_view_mut::<3, 9>(row, 0)
                    .copy_from(&los_jacobian(v, &c_mu));
                for i in 0..3 {
                    resid[row + i] = y[row + i] - v[i];
                }
                row += 3;
                star += 1;
            }
        }
        h.fixed_view_mut::<3, 3>(row, RATE).fill_with_identity();
        h.fixed_view_mut::<3, 3>(row, BIAS).fill_with_identity();
        let w = omega_meas - (self.state.omega + self.state.bias);
        resid.fixed_rows_mut::<3>(row).copy_from(&w);

        let mut r_diag = DVector::from_element(m, tuning.r_attitude * tuning.r_attitude);
        r_diag
            .rows_mut(row, 3)
            .fill(tuning.r_gyro * tuning.r_gyro);
        let r = DMatrix::from_diagonal(&r_diag);

        let ph_t = self.cov * h.transpose();
        let s: DMatrix<f64> = &h * &ph_t + &r;
        let chol = Cholesky::new(s).ok_or(Error::SingularInnovation {
            condition: f64::INFINITY,
        })?;
        let cond = condition_estimate(&chol.l());
        if !(cond <= MAX_INNOVATION_CONDITION) {
            return Err(Error::SingularInnovation { condition: cond });
        }
        let k = chol.solve(&ph_t.transpose()).transpose();
        let dx: Vec9 = Vec9::from_iterator((&k * &resid).iter().copied());
        let kh = Mat9::from_iterator((&k * &h).iter().copied());
        let ikh = Mat9::identity() - kh;
        let krk = Mat9::from_iterator((&k * &r * k.transpose()).iter().copied());
        self.cov = symmetrize(&(ikh * self.cov * ikh.transpose() + krk));
        self.apply_correction(&dx);
        Ok(resid)
    }

    fn apply_correction(&mut self, dx: &Vec9) {
        self.state.omega += dx.fixed_rows::<3>(RATE);
        self.state.bias += dx.fixed_rows::<3>(BIAS);
        let dq = Mrp(dx.fixed_rows::<3>(ATTITUDE).into_owned()).to_quaternion();
        self.state.q = dq.multiply(&self.state.q);
    }
}
