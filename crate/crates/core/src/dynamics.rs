//! Rigid-body truth model: quaternion kinematics, Euler's equations with an
//! optional viscous braking torque, and a constant gyro bias.

use nalgebra::{SymmetricEigen, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rotations::{omega_matrix, Mat3, Quaternion, Vec3};

/// Symmetric positive-definite inertia tensor with its cached inverse.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InertiaMatrix {
    j: Mat3,
    inv: Mat3,
}

impl InertiaMatrix {
    pub fn new(j: Mat3) -> Result<Self> {
        if (j - j.transpose()).abs().max() > 1e-12 || !j.iter().all(|v| v.is_finite()) {
            return Err(Error::SingularInertia);
        }
        let eig = SymmetricEigen::new(j);
        if eig.eigenvalues.min() <= 0.0 {
            return Err(Error::SingularInertia);
        }
        let inv = j.try_inverse().ok_or(Error::SingularInertia)?;
        Ok(Self { j, inv })
    }

    pub fn diagonal(jx: f64, jy: f64, jz: f64) -> Result<Self> {
        Self::new(Mat3::from_diagonal(&Vec3::new(jx, jy, jz)))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.j
    }

    pub fn inverse(&self) -> &Mat3 {
        &self.inv
    }
}

/// External torque acting on the truth model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorqueProfile {
    /// Constant body-frame torque, N·m.
    pub constant_torque: [f64; 3],
    /// Viscous coefficient of the braking torque `−D·ω`.
    pub damping: f64,
    /// Time at which braking switches on, s.
    pub damping_onset: f64,
}

impl TorqueProfile {
    pub fn torque_free() -> Self {
        Self {
            constant_torque: [0.0; 3],
            damping: 0.0,
            damping_onset: f64::INFINITY,
        }
    }

    pub fn braking(damping: f64, onset: f64) -> Self {
        Self {
            constant_torque: [0.0; 3],
            damping,
            damping_onset: onset,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.damping >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "damping coefficient must be non-negative, got {}",
                self.damping
            )));
        }
        if !(self.damping_onset >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "damping onset must be non-negative, got {}",
                self.damping_onset
            )));
        }
        Ok(())
    }

    pub fn damping_active(&self, t: f64) -> bool {
        self.damping > 0.0 && t >= self.damping_onset
    }
}

impl Default for TorqueProfile {
    fn default() -> Self {
        Self::torque_free()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthState {
    pub q: Quaternion,
    pub omega: Vec3,
    pub bias: Vec3,
    pub t: f64,
}

/// Angular acceleration `J⁻¹(M − ω×(Jω) − D·ω)`, the damping term included
/// only when `damping_active` is set.
pub fn omega_dot(
    omega: &Vec3,
    inertia: &InertiaMatrix,
    torque: &Vec3,
    damping: f64,
    damping_active: bool,
) -> Vec3 {
    let h = inertia.matrix() * omega;
    let mut m = torque - omega.cross(&h);
    if damping_active {
        m -= damping * omega;
    }
    inertia.inverse() * m
}

fn quat_dot(q: &Vector4<f64>, omega: &Vec3) -> Vector4<f64> {
    0.5 * omega_matrix(omega) * q
}

/// One RK4 step of the coupled attitude/rate system under a constant torque.
/// The damping flag is frozen over the step.
pub(crate) fn rk4_step(
    q: &Quaternion,
    omega: &Vec3,
    inertia: &InertiaMatrix,
    torque: &Vec3,
    damping: f64,
    damping_active: bool,
    dt: f64,
) -> (Quaternion, Vec3) {
    let f = |w: &Vec3| omega_dot(w, inertia, torque, damping, damping_active);
    let q0 = q.as_vector4();
    let w0 = *omega;

    let kq1 = quat_dot(&q0, &w0);
    let kw1 = f(&w0);
    let w1 = w0 + 0.5 * dt * kw1;
    let kq2 = quat_dot(&(q0 + 0.5 * dt * kq1), &w1);
    let kw2 = f(&w1);
    let w2 = w0 + 0.5 * dt * kw2;
    let kq3 = quat_dot(&(q0 + 0.5 * dt * kq2), &w2);
    let kw3 = f(&w2);
    let w3 = w0 + dt * kw3;
    let kq4 = quat_dot(&(q0 + dt * kq3), &w3);
    let kw4 = f(&w3);

    let q1 = q0 + dt / 6.0 * (kq1 + 2.0 * kq2 + 2.0 * kq3 + kq4);
    let w = w0 + dt / 6.0 * (kw1 + 2.0 * kw2 + 2.0 * kw3 + kw4);
    (Quaternion::from_vector4(&q1), w)
}

/// Advances the truth state by `dt`. Braking applies for the whole step when
/// it has started at the beginning of the step.
pub fn propagate_truth(
    state: &TruthState,
    inertia: &InertiaMatrix,
    profile: &TorqueProfile,
    dt: f64,
) -> TruthState {
    let torque = Vec3::from(profile.constant_torque);
    let (q, omega) = rk4_step(
        &state.q,
        &state.omega,
        inertia,
        &torque,
        profile.damping,
        profile.damping_active(state.t),
        dt,
    );
    TruthState {
        q,
        omega,
        bias: state.bias,
        t: state.t + dt,
    }
}

/// Time derivative of the filter's nominal model: torque-free kinematics and
/// Euler dynamics with a constant bias. Returns `(q̇, ω̇, ḃ)`.
pub fn mekf_nominal_derivative(
    q: &Quaternion,
    omega: &Vec3,
    inertia: &InertiaMatrix,
) -> (Vector4<f64>, Vec3, Vec3) {
    (
        quat_dot(&q.as_vector4(), omega),
        omega_dot(omega, inertia, &Vec3::zeros(), 0.0, false),
        Vec3::zeros(),
    )
}

/// Propagates the filter's nominal attitude and rate over `dt`.
pub fn propagate_nominal(
    q: &Quaternion,
    omega: &Vec3,
    inertia: &InertiaMatrix,
    dt: f64,
) -> (Quaternion, Vec3) {
    rk4_step(q, omega, inertia, &Vec3::zeros(), 0.0, false, dt)
}

/// Rotational kinetic energy `½ωᵀJω`.
pub fn kinetic_energy(omega: &Vec3, inertia: &InertiaMatrix) -> f64 {
    0.5 * omega.dot(&(inertia.matrix() * omega))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotations::principal_angle;
    use approx::assert_relative_eq;

    fn paper_inertia() -> InertiaMatrix {
        InertiaMatrix::diagonal(100.0, 60.0, 50.0).unwrap()
    }

    fn spin_rate() -> Vec3 {
        Vec3::new(3.0, 4.4, -5.0).map(f64::to_radians)
    }

    #[test]
    fn rejects_bad_inertia() {
        assert!(InertiaMatrix::diagonal(1.0, 0.0, 1.0).is_err());
        assert!(InertiaMatrix::diagonal(1.0, -2.0, 1.0).is_err());
        let mut asym = Mat3::identity();
        asym[(0, 1)] = 0.1;
        assert!(InertiaMatrix::new(asym).is_err());
    }

    #[test]
    fn equilibrium_and_principal_spin() {
        let j = paper_inertia();
        assert_eq!(omega_dot(&Vec3::zeros(), &j, &Vec3::zeros(), 0.0, false), Vec3::zeros());
        let w = Vec3::new(0.0, 0.3, 0.0);
        assert_eq!(omega_dot(&w, &j, &Vec3::zeros(), 0.0, false), Vec3::zeros());
    }

    #[test]
    fn gyroscopic_term_by_hand() {
        let j = paper_inertia();
        let w = Vec3::new(0.05236, 0.07679, -0.08727);
        // ω × (Jω) with Jω = (5.236, 4.6074, -4.3635)
        let h = Vec3::new(100.0 * w.x, 60.0 * w.y, 50.0 * w.z);
        let cross = Vec3::new(
            w.y * h.z - w.z * h.y,
            w.z * h.x - w.x * h.z,
            w.x * h.y - w.y * h.x,
        );
        let expected = Vec3::new(-cross.x / 100.0, -cross.y / 60.0, -cross.z / 50.0);
        let got = omega_dot(&w, &j, &Vec3::zeros(), 0.0, false);
        assert_relative_eq!(got, expected, epsilon = 1e-15);
        // Euler's equation about x: J1·ω̇1 = (J2 − J3)·ω2·ω3
        assert_relative_eq!(got.x, 10.0 * w.y * w.z / 100.0, epsilon = 1e-15);
    }

    #[test]
    fn resting_body_stays_put() {
        let j = paper_inertia();
        let s0 = TruthState {
            q: Quaternion::new(0.1, 0.2, 0.3, 0.9),
            omega: Vec3::zeros(),
            bias: Vec3::zeros(),
            t: 0.0,
        };
        let s1 = propagate_truth(&s0, &j, &TorqueProfile::torque_free(), 0.5);
        assert_eq!(s1.q, s0.q);
        assert_eq!(s1.t, 0.5);
    }

    #[test]
    fn single_axis_spin_matches_closed_form() {
        let j = paper_inertia();
        let mut s = TruthState {
            q: Quaternion::IDENTITY,
            omega: Vec3::new(0.1, 0.0, 0.0),
            bias: Vec3::new(1e-3, 0.0, 0.0),
            t: 0.0,
        };
        for _ in 0..20 {
            s = propagate_truth(&s, &j, &TorqueProfile::torque_free(), 0.5);
        }
        let expected = Quaternion::from_axis_angle(&Vec3::x(), -1.0);
        assert!(principal_angle(&s.q, &expected) < 1e-8);
        assert_relative_eq!(principal_angle(&s.q, &Quaternion::IDENTITY), 1.0, epsilon = 1e-8);
        assert_eq!(s.bias, Vec3::new(1e-3, 0.0, 0.0));
    }

    #[test]
    fn braking_decays_spin() {
        let j = paper_inertia();
        let profile = TorqueProfile::braking(0.6, 0.0);
        let mut s = TruthState {
            q: Quaternion::IDENTITY,
            omega: spin_rate(),
            bias: Vec3::zeros(),
            t: 0.0,
        };
        let mut last_rate = s.omega.norm();
        let mut last_energy = kinetic_energy(&s.omega, &j);
        for _ in 0..100 {
            s = propagate_truth(&s, &j, &profile, 0.5);
            assert!(s.omega.norm() < last_rate);
            assert!(kinetic_energy(&s.omega, &j) <= last_energy);
            last_rate = s.omega.norm();
            last_energy = kinetic_energy(&s.omega, &j);
            assert!((s.q.norm() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn braking_waits_for_onset() {
        let j = paper_inertia();
        let profile = TorqueProfile::braking(0.6, 10.0);
        let s = TruthState {
            q: Quaternion::IDENTITY,
            omega: spin_rate(),
            bias: Vec3::zeros(),
            t: 0.0,
        };
        let free = propagate_truth(&s, &j, &TorqueProfile::torque_free(), 0.5);
        let early = propagate_truth(&s, &j, &profile, 0.5);
        assert_eq!(free.omega, early.omega);
    }

    #[test]
    fn torque_free_conserves_energy_and_momentum() {
        let j = paper_inertia();
        let mut s = TruthState {
            q: Quaternion::IDENTITY,
            omega: spin_rate(),
            bias: Vec3::zeros(),
            t: 0.0,
        };
        let e0 = kinetic_energy(&s.omega, &j);
        let h0 = (j.matrix() * s.omega).norm();
        for _ in 0..10_000 {
            s = propagate_truth(&s, &j, &TorqueProfile::torque_free(), 0.5);
        }
        let e1 = kinetic_energy(&s.omega, &j);
        let h1 = (j.matrix() * s.omega).norm();
        assert!(((e1 - e0) / e0).abs() <= 1e-6, "energy drift {}", (e1 - e0) / e0);
        assert!(((h1 - h0) / h0).abs() <= 1e-6, "momentum drift {}", (h1 - h0) / h0);
    }

    #[test]
    fn nominal_model_agrees_with_truth_model() {
        let j = paper_inertia();
        let w = Vec3::new(0.05, 0.07, -0.08);
        let q = Quaternion::new(0.3, -0.1, 0.2, 0.9);
        let (_, wdot, bdot) = mekf_nominal_derivative(&q, &w, &j);
        assert_eq!(bdot, Vec3::zeros());
        let reference = omega_dot(&w, &j, &Vec3::zeros(), 0.6, false);
        assert!((wdot - reference).norm() <= 1e-14);
        let (_, wdot_axis, _) = mekf_nominal_derivative(&q, &Vec3::new(0.0, 0.0, 0.2), &j);
        assert_eq!(wdot_axis, Vec3::zeros());
    }
}
