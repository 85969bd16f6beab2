//! Attitude algebra.
//!
//! Quaternions are stored scalar-last (`[x, y, z, w]`) and multiplied with the
//! Hamilton rule. The direction cosine matrix of a quaternion is the matrix
//! for which `dcm(a ⊗ b) = dcm(a) · dcm(b)`; an attitude quaternion `q` maps
//! inertial vectors into the body frame through `dcm(q)`. Composition
//! `δq ⊗ q̂` therefore applies `δq` after `q̂`, in the body frame.
//!
//! Modified Rodrigues Parameters are used for small attitude errors; the
//! rotation angle of an MRP `s` is `4·atan(‖s‖)`.

use std::fmt;
use std::ops::{Mul, Neg};

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Tolerance on `‖CᵀC − I‖_F` and `|det C − 1|` accepted by [`Dcm::new`].
pub const DCM_TOLERANCE: f64 = 1e-6;

/// Unit quaternion, scalar-last.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        x: 0.0,
        y: 0.0,
        z: 0.0,
        w: 1.0,
    };

    /// Builds a quaternion from raw components and normalizes it.
    pub fn new(x: f64, y: f64, z: f64, w: f64) -> Self {
        Self { x, y, z, w }.normalized()
    }

    pub fn from_vector4(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::IDENTITY;
        }
        let half = 0.5 * angle;
        let v = axis * (half.sin() / n);
        Self::new(v.x, v.y, v.z, half.cos())
    }

    /// Exponential map of a rotation vector (axis times angle in radians).
    pub fn from_rotation_vector(phi: &Vec3) -> Self {
        let angle = phi.norm();
        if angle < 1e-12 {
            // second-order series keeps the map smooth through zero
            let v = 0.5 * phi;
            return Self::new(v.x, v.y, v.z, 1.0 - angle * angle / 8.0);
        }
        Self::from_axis_angle(phi, angle)
    }

    /// Logarithm map: the rotation vector of the shortest equivalent rotation.
    pub fn to_rotation_vector(&self) -> Vec3 {
        let q = self.canonical();
        let v = q.vector();
        let s = v.norm();
        if s < 1e-12 {
            return 2.0 * v;
        }
        let angle = 2.0 * s.atan2(q.w);
        v * (angle / s)
    }

    pub fn vector(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn scalar(&self) -> f64 {
        self.w
    }

    pub fn as_vector4(&self) -> Vector4<f64> {
        Vector4::new(self.x, self.y, self.z, self.w)
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z + self.w * self.w).sqrt()
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        Self {
            x: self.x / n,
            y: self.y / n,
            z: self.z / n,
            w: self.w / n,
        }
    }

    pub fn conjugate(&self) -> Self {
        Self {
            x: -self.x,
            y: -self.y,
            z: -self.z,
            w: self.w,
        }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z + self.w * other.w
    }

    /// Representative with a non-negative scalar part.
    pub fn canonical(self) -> Self {
        if self.w < 0.0 {
            -self
        } else {
            self
        }
    }

    /// Sign representative closest to `reference` (non-negative dot product).
    pub fn aligned_with(self, reference: &Self) -> Self {
        if self.dot(reference) < 0.0 {
            -self
        } else {
            self
        }
    }

    /// Hamilton product `self ⊗ rhs`, renormalized.
    pub fn multiply(&self, rhs: &Self) -> Self {
        let (a, b) = (self, rhs);
        Self {
            x: a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            y: a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            z: a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
            w: a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        }
        .normalized()
    }

    pub fn to_dcm(&self) -> Dcm {
        Dcm(self.rotation_matrix())
    }

    pub(crate) fn rotation_matrix(&self) -> Mat3 {
        let (x, y, z, w) = (self.x, self.y, self.z, self.w);
        let (xx, yy, zz) = (x * x, y * y, z * z);
        let (xy, xz, yz) = (x * y, x * z, y * z);
        let (wx, wy, wz) = (w * x, w * y, w * z);
        Mat3::new(
            1.0 - 2.0 * (yy + zz),
            2.0 * (xy - wz),
            2.0 * (xz + wy),
            2.0 * (xy + wz),
            1.0 - 2.0 * (xx + zz),
            2.0 * (yz - wx),
            2.0 * (xz - wy),
            2.0 * (yz + wx),
            1.0 - 2.0 * (xx + yy),
        )
    }

    /// Rotates `v` by this quaternion, i.e. `dcm(self) · v`.
    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.rotation_matrix() * v
    }

    /// MRP of this rotation, using the sign with non-negative scalar part.
    pub fn to_mrp(&self) -> Result<Mrp> {
        let q = self.canonical();
        let denom = 1.0 + q.w;
        if !(denom > 1e-12) {
            return Err(Error::MrpSingularity { scalar: q.w });
        }
        Ok(Mrp(q.vector() / denom))
    }
}

impl Default for Quaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;
    fn neg(self) -> Self {
        Self {
            x: -self.x,
            y: -self.y,
            z: -self.z,
            w: -self.w,
        }
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;
    fn mul(self, rhs: Self) -> Self {
        self.multiply(&rhs)
    }
}

impl fmt::Display for Quaternion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{:.9}, {:.9}, {:.9}; {:.9}]",
            self.x, self.y, self.z, self.w
        )
    }
}

pub fn quat_multiply(a: &Quaternion, b: &Quaternion) -> Quaternion {
    a.multiply(b)
}

/// Modified Rodrigues Parameters.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Mrp(pub Vec3);

impl Mrp {
    pub fn to_quaternion(&self) -> Quaternion {
        let s2 = self.0.norm_squared();
        let d = 1.0 + s2;
        let v = self.0 * (2.0 / d);
        Quaternion::new(v.x, v.y, v.z, (1.0 - s2) / d)
    }

    pub fn to_dcm(&self) -> Dcm {
        self.to_quaternion().to_dcm()
    }

    /// Rotation angle `4·atan(‖s‖)`.
    pub fn angle(&self) -> f64 {
        4.0 * self.0.norm().atan()
    }
}

/// Proper orthonormal 3×3 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dcm(Mat3);

impl Dcm {
    pub const IDENTITY: Dcm = Dcm(Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0));

    /// Validates orthonormality and handedness within [`DCM_TOLERANCE`].
    pub fn new(m: Mat3) -> Result<Self> {
        let residual = (m.transpose() * m - Mat3::identity()).norm();
        let det = m.determinant();
        if !(residual <= DCM_TOLERANCE) || !((det - 1.0).abs() <= DCM_TOLERANCE) {
            return Err(Error::NonOrthonormalInput { residual, det });
        }
        Ok(Self(m))
    }

    pub(crate) fn from_matrix_unchecked(m: Mat3) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Dcm {
        Dcm(self.0.transpose())
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Shepperd's method: branch on the largest of the trace and the diagonal.
    pub fn to_quaternion(&self) -> Quaternion {
        let m = &self.0;
        let tr = m.trace();
        let (m00, m11, m22) = (m[(0, 0)], m[(1, 1)], m[(2, 2)]);
        let q = if tr >= m00 && tr >= m11 && tr >= m22 {
            let w = 0.5 * (1.0 + tr).sqrt();
            let f = 0.25 / w;
            Quaternion {
                x: (m[(2, 1)] - m[(1, 2)]) * f,
                y: (m[(0, 2)] - m[(2, 0)]) * f,
                z: (m[(1, 0)] - m[(0, 1)]) * f,
                w,
            }
        } else if m00 >= m11 && m00 >= m22 {
            let x = 0.5 * (1.0 + m00 - m11 - m22).sqrt();
            let f = 0.25 / x;
            Quaternion {
                x,
                y: (m[(0, 1)] + m[(1, 0)]) * f,
                z: (m[(0, 2)] + m[(2, 0)]) * f,
                w: (m[(2, 1)] - m[(1, 2)]) * f,
            }
        } else if m11 >= m22 {
            let y = 0.5 * (1.0 - m00 + m11 - m22).sqrt();
            let f = 0.25 / y;
            Quaternion {
                x: (m[(0, 1)] + m[(1, 0)]) * f,
                y,
                z: (m[(1, 2)] + m[(2, 1)]) * f,
                w: (m[(0, 2)] - m[(2, 0)]) * f,
            }
        } else {
            let z = 0.5 * (1.0 - m00 - m11 + m22).sqrt();
            let f = 0.25 / z;
            Quaternion {
                x: (m[(0, 2)] + m[(2, 0)]) * f,
                y: (m[(1, 2)] + m[(2, 1)]) * f,
                z,
                w: (m[(1, 0)] - m[(0, 1)]) * f,
            }
        };
        q.normalized().canonical()
    }
}

impl Mul for Dcm {
    type Output = Dcm;
    fn mul(self, rhs: Dcm) -> Dcm {
        Dcm(self.0 * rhs.0)
    }
}

pub fn quat_to_dcm(q: &Quaternion) -> Dcm {
    q.to_dcm()
}

pub fn dcm_to_quat(c: &Dcm) -> Quaternion {
    c.to_quaternion()
}

pub fn quat_to_mrp(q: &Quaternion) -> Result<Mrp> {
    q.to_mrp()
}

pub fn mrp_to_quat(s: &Mrp) -> Quaternion {
    s.to_quaternion()
}

pub fn mrp_to_dcm(s: &Mrp) -> Dcm {
    s.to_dcm()
}

/// Kinematics matrix with `q̇ = ½ Ω(ω) q` for a scalar-last attitude
/// quaternion and body rate `ω`.
///
/// With `dcm(q)` mapping inertial to body, `Ċ = −[ω]ₓ C`, which for the
/// Hamilton product gives `q̇ = −½ (ω, 0) ⊗ q`.
pub fn omega_matrix(w: &Vec3) -> Matrix4<f64> {
    let (x, y, z) = (w.x, w.y, w.z);
    Matrix4::new(
        0.0, z, -y, -x, //
        -z, 0.0, x, -y, //
        y, -x, 0.0, -z, //
        x, y, z, 0.0,
    )
}

/// Cross-product matrix: `skew(v) · u = v × u`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Angle of the rotation taking `b` to `a`, in `[0, π]`, insensitive to the
/// sign of either quaternion.
pub fn principal_angle(a: &Quaternion, b: &Quaternion) -> f64 {
    let d = a.multiply(&b.conjugate());
    2.0 * d.vector().norm().atan2(d.w.abs())
}

/// Unit vector for a right ascension / declination pair given in degrees.
pub fn radec_to_unit(ra_deg: f64, dec_deg: f64) -> Vec3 {
    let (ra, dec) = (ra_deg.to_radians(), dec_deg.to_radians());
    Vec3::new(dec.cos() * ra.cos(), dec.cos() * ra.sin(), dec.sin())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn arb_quat() -> impl Strategy<Value = Quaternion> {
        (
            -1.0f64..1.0,
            -1.0f64..1.0,
            -1.0f64..1.0,
            -1.0f64..1.0,
        )
            .prop_filter("non-degenerate", |(a, b, c, d)| {
                a * a + b * b + c * c + d * d > 1e-3
            })
            .prop_map(|(a, b, c, d)| Quaternion::new(a, b, c, d))
    }

    fn arb_vec() -> impl Strategy<Value = Vec3> {
        (-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0).prop_map(|(a, b, c)| Vec3::new(a, b, c))
    }

    fn same_rotation(a: &Quaternion, b: &Quaternion) -> f64 {
        let d = a.as_vector4() - b.aligned_with(a).as_vector4();
        d.norm()
    }

    #[test]
    fn identity_composition() {
        let q = Quaternion::new(0.1, -0.3, 0.2, 0.9);
        assert!(same_rotation(&(Quaternion::IDENTITY * q), &q) < 1e-15);
        let inv = q * q.conjugate();
        assert!(same_rotation(&inv, &Quaternion::IDENTITY) < 1e-15);
    }

    #[test]
    fn composition_matches_dcm_chain() {
        let qx = Quaternion::from_axis_angle(&Vec3::x(), FRAC_PI_2);
        let qy = Quaternion::from_axis_angle(&Vec3::y(), FRAC_PI_2);
        let chain = *qx.to_dcm().matrix() * *qy.to_dcm().matrix();
        let expected = Dcm::new(chain).unwrap().to_quaternion();
        assert!(same_rotation(&(qx * qy), &expected) < 1e-12);
        // rotate x by 90° about y then about x: x -> -z -> y
        let v = (qx * qy).rotate(&Vec3::x());
        assert_relative_eq!(v, Vec3::y(), epsilon = 1e-12);
    }

    #[test]
    fn dcm_special_cases() {
        assert_relative_eq!(
            *Quaternion::IDENTITY.to_dcm().matrix(),
            Mat3::identity(),
            epsilon = 0.0
        );
        let qz = Quaternion::from_axis_angle(&Vec3::z(), PI);
        assert_relative_eq!(
            *qz.to_dcm().matrix(),
            Mat3::from_diagonal(&Vec3::new(-1.0, -1.0, 1.0)),
            epsilon = 1e-15
        );
    }

    #[test]
    fn dcm_rejects_non_rotations() {
        let scaled = Mat3::identity() * 1.01;
        assert!(matches!(
            Dcm::new(scaled),
            Err(Error::NonOrthonormalInput { .. })
        ));
        let reflection = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(Dcm::new(reflection).is_err());
    }

    #[test]
    fn dcm_round_trip_near_half_turn() {
        for axis in [Vec3::x(), Vec3::y(), Vec3::z(), Vec3::new(1.0, -2.0, 0.5)] {
            let q = Quaternion::from_axis_angle(&axis, PI - 1e-9);
            let back = q.to_dcm().to_quaternion();
            assert!(same_rotation(&q, &back) < 1e-10);
        }
    }

    #[test]
    fn mrp_identity_and_angle() {
        let s = Mrp::default();
        assert_eq!(s.to_quaternion(), Quaternion::IDENTITY);
        assert_eq!(*s.to_dcm().matrix(), Mat3::identity());

        let alpha = 0.7;
        let q = Quaternion::from_axis_angle(&Vec3::new(1.0, 2.0, -1.0), alpha);
        let s = q.to_mrp().unwrap();
        assert_relative_eq!(s.0.norm(), (alpha / 4.0).tan(), epsilon = 1e-14);
        assert_relative_eq!(s.angle(), alpha, epsilon = 1e-14);
    }

    #[test]
    fn mrp_small_rotation_first_order() {
        let s = Mrp(Vec3::new(0.001, 0.0, 0.0));
        let exact = *s.to_dcm().matrix();
        let linear = Mat3::identity() + 4.0 * skew(&s.0);
        assert!((exact - linear).norm() <= 16.0 * 1e-6);
    }

    #[test]
    fn mrp_flips_to_short_rotation() {
        let q = -Quaternion::from_axis_angle(&Vec3::z(), 0.2);
        let s = q.to_mrp().unwrap();
        assert!(s.0.norm() <= 1.0);
        assert_relative_eq!(s.0.z, (0.05f64).tan(), epsilon = 1e-14);
    }

    #[test]
    fn mrp_rejects_non_finite() {
        let q = Quaternion {
            x: f64::NAN,
            y: 0.0,
            z: 0.0,
            w: f64::NAN,
        };
        assert!(matches!(q.to_mrp(), Err(Error::MrpSingularity { .. })));
    }

    #[test]
    fn omega_matrix_zero_and_skew() {
        assert_eq!(omega_matrix(&Vec3::zeros()), Matrix4::zeros());
        let w = Vec3::new(0.3, -0.2, 0.7);
        let m = omega_matrix(&w);
        assert_eq!(m + m.transpose(), Matrix4::zeros());
    }

    #[test]
    fn omega_matrix_matches_product_form() {
        let w = Vec3::new(0.3, -0.2, 0.7);
        let q = Quaternion::new(0.1, 0.4, -0.3, 0.8);
        let pure = Quaternion {
            x: w.x,
            y: w.y,
            z: w.z,
            w: 0.0,
        };
        // unnormalized Hamilton product of the pure rate quaternion and q
        let prod = Vector4::new(
            pure.w * q.x + pure.x * q.w + pure.y * q.z - pure.z * q.y,
            pure.w * q.y - pure.x * q.z + pure.y * q.w + pure.z * q.x,
            pure.w * q.z + pure.x * q.y - pure.y * q.x + pure.z * q.w,
            pure.w * q.w - pure.x * q.x - pure.y * q.y - pure.z * q.z,
        );
        assert_relative_eq!(omega_matrix(&w) * q.as_vector4(), -prod, epsilon = 1e-15);
    }

    #[test]
    fn omega_matrix_integrates_to_axis_angle() {
        // fine RK4 of q̇ = ½Ωq over one second at 0.1 rad/s about x
        let w = Vec3::new(0.1, 0.0, 0.0);
        let om = 0.5 * omega_matrix(&w);
        let mut q = Quaternion::IDENTITY.as_vector4();
        let h = 0.01;
        for _ in 0..100 {
            let k1 = om * q;
            let k2 = om * (q + 0.5 * h * k1);
            let k3 = om * (q + 0.5 * h * k2);
            let k4 = om * (q + h * k3);
            q += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        let q = Quaternion::from_vector4(&q);
        assert_relative_eq!(
            principal_angle(&q, &Quaternion::IDENTITY),
            0.1,
            epsilon = 1e-12
        );
        let axis = q.to_rotation_vector().normalize();
        assert_relative_eq!(axis.x.abs(), 1.0, epsilon = 1e-12);
        // body-frame rate: inertial x stays put, inertial y drifts to -z in body
        let v = q.rotate(&Vec3::y());
        assert!(v.z < 0.0);
    }

    #[test]
    fn skew_basics() {
        assert_eq!(skew(&Vec3::zeros()), Mat3::zeros());
        assert_eq!(skew(&Vec3::x()) * Vec3::y(), Vec3::z());
    }

    #[test]
    fn principal_angle_cases() {
        let q = Quaternion::new(0.2, 0.1, -0.4, 0.8);
        assert_eq!(principal_angle(&q, &q), 0.0);
        assert!(principal_angle(&q, &-q) < 1e-15);
        let qz = Quaternion::from_axis_angle(&Vec3::z(), FRAC_PI_2);
        assert_relative_eq!(
            principal_angle(&Quaternion::IDENTITY, &qz),
            FRAC_PI_2,
            epsilon = 1e-15
        );
    }

    #[test]
    fn radec_table_values() {
        let sirius = radec_to_unit(101.287136, -16.716113);
        assert_relative_eq!(sirius, Vec3::new(-0.187455, 0.939218, -0.287630), epsilon = 1e-5);
        let deneb = radec_to_unit(310.357979, 45.280339);
        assert_relative_eq!(deneb, Vec3::new(0.455649, -0.536182, 0.710558), epsilon = 1e-5);
        assert_relative_eq!(radec_to_unit(0.0, 90.0), Vec3::z(), epsilon = 1e-15);
    }

    #[test]
    fn rotation_vector_round_trip() {
        let phi = Vec3::new(0.01, -0.02, 0.005);
        let back = Quaternion::from_rotation_vector(&phi).to_rotation_vector();
        assert_relative_eq!(back, phi, epsilon = 1e-15);
        assert_eq!(Quaternion::from_rotation_vector(&Vec3::zeros()), Quaternion::IDENTITY);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn normalized_outputs(a in arb_quat(), b in arb_quat()) {
            prop_assert!(((a * b).norm() - 1.0).abs() <= 1e-12);
            prop_assert!((a.to_dcm().to_quaternion().norm() - 1.0).abs() <= 1e-12);
            prop_assert!((a.to_mrp().unwrap().to_quaternion().norm() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn dcm_round_trip(q in arb_quat()) {
            let c = q.to_dcm();
            let m = c.matrix();
            prop_assert!((m.transpose() * m - Mat3::identity()).norm() <= 1e-10);
            prop_assert!((m.determinant() - 1.0).abs() <= 1e-10);
            prop_assert!(same_rotation(&q, &c.to_quaternion()) <= 1e-10);
        }

        #[test]
        fn dcm_homomorphism(a in arb_quat(), b in arb_quat()) {
            let lhs = *(a * b).to_dcm().matrix();
            let rhs = a.to_dcm().matrix() * b.to_dcm().matrix();
            prop_assert!((lhs - rhs).norm() <= 1e-10);
        }

        #[test]
        fn mrp_round_trip(q in arb_quat()) {
            let back = q.to_mrp().unwrap().to_quaternion();
            prop_assert!(same_rotation(&q, &back) <= 1e-10);
        }

        #[test]
        fn skew_is_cross_product(v in arb_vec(), u in arb_vec()) {
            prop_assert!((skew(&v) * u - v.cross(&u)).norm() <= 1e-14);
            prop_assert!((skew(&v) * u + skew(&u) * v).norm() <= 1e-14);
        }

        #[test]
        fn rotated_skew_identity(q in arb_quat(), a in arb_vec()) {
            // C[a]ₓ = [Ca]ₓ C for proper rotations
            let c = *q.to_dcm().matrix();
            prop_assert!((c * skew(&a) - skew(&(c * a)) * c).norm() <= 1e-12);
            // and C[a]ₓ applied to C⁻¹ u equals (Ca) × u
            let u = Vec3::new(0.3, -0.1, 0.9);
            prop_assert!((c * skew(&a) * c.transpose() * u - (c * a).cross(&u)).norm() <= 1e-12);
        }

        #[test]
        fn principal_angle_is_a_metric(a in arb_quat(), b in arb_quat()) {
            let ab = principal_angle(&a, &b);
            prop_assert!((0.0..=PI + 1e-12).contains(&ab));
            prop_assert!((ab - principal_angle(&b, &a)).abs() <= 1e-12);
            prop_assert!((ab - principal_angle(&-a, &b)).abs() <= 1e-12);
        }
    }
}
