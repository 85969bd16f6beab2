//! Collapsing a weighted bank of estimates into one.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mekf::{Mat9, ATTITUDE, BIAS, RATE};
use crate::rotations::{Quaternion, Vec3};

/// Gap between the two largest eigenvalues below which the average is
/// considered ambiguous.
pub const DEGENERACY_GAP: f64 = 1e-12;

/// Eigen-decomposition of a symmetric 4×4 matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and the matching eigenvectors as columns.
pub fn symmetric_eigen4(m: &Matrix4<f64>) -> (Vector4<f64>, Matrix4<f64>) {
    let mut a = *m;
    let mut v = Matrix4::<f64>::identity();
    let scale = a.norm().max(f64::MIN_POSITIVE);
    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..4 {
            for q in p + 1..4 {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= 1e-17 * scale {
            break;
        }
        for p in 0..4 {
            for q in p + 1..4 {
                let apq = a[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..4 {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..4 {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..4 {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    (a.diagonal(), v)
}

/// Weighted quaternion average: the dominant eigenvector of `Σ wᵢ qᵢqᵢᵀ`,
/// sign-aligned with `previous` when given, otherwise with the heaviest input.
pub fn markley_average(
    quaternions: &[Quaternion],
    weights: &[f64],
    previous: Option<&Quaternion>,
) -> Result<Quaternion> {
    if quaternions.len() != weights.len() || quaternions.is_empty() {
        return Err(Error::LengthMismatch {
            expected: quaternions.len().max(1),
            found: weights.len(),
        });
    }
    let mut m = Matrix4::<f64>::zeros();
    for (q, w) in quaternions.iter().zip(weights) {
        let v = q.as_vector4();
        m += *w * v * v.transpose();
    }
    let (vals, vecs) = symmetric_eigen4(&m);
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let gap = vals[order[0]] - vals[order[1]];
    if gap <= DEGENERACY_GAP {
        return Err(Error::DegenerateSpectrum(gap));
    }
    let q = Quaternion::from_vector4(&vecs.column(order[0]).into_owned());
    let reference = match previous {
        Some(p) => *p,
        None => {
            let heaviest = weights
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap_or(0);
            quaternions[heaviest]
        }
    };
    Ok(q.aligned_with(&reference))
}

/// Componentwise weighted mean of vectors.
pub fn weighted_mean(values: &[Vec3], weights: &[f64]) -> Vec3 {
    values
        .iter()
        .zip(weights)
        .fold(Vec3::zeros(), |acc, (v, w)| acc + *w * v)
}

/// Per-camera weighted mean misalignment of a bank; `mus[j][k]` is camera
/// `k` of hypothesis `j`.
pub fn weighted_mean_mu(mus: &[Vec<Vec3>], weights: &[f64]) -> Vec<Vec3> {
    let cameras = mus.first().map_or(0, Vec::len);
    (0..cameras)
        .map(|k| {
            mus.iter()
                .zip(weights)
                .fold(Vec3::zeros(), |acc, (m, w)| acc + *w * m[k])
        })
        .collect()
}

/// Single estimate distilled from a weighted bank.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusedEstimate {
    pub t: f64,
    pub q: Quaternion,
    pub omega: Vec3,
    pub bias: Vec3,
    pub mu: Vec<Vec3>,
    /// Weighted sum of the members' error covariances.
    pub cov: Mat9,
    /// Per-axis weighted variance of the members' misalignments about the mean.
    pub mu_spread: Vec<Vec3>,
    /// Per-axis weighted variance of the members' rate, bias and attitude
    /// about the fused values, in error-state order.
    pub state_spread: [f64; 9],
}

/// One bank member as seen by [`fuse`].
#[derive(Clone, Copy, Debug)]
pub struct Member<'a> {
    pub q: &'a Quaternion,
    pub omega: &'a Vec3,
    pub bias: &'a Vec3,
    pub mu: &'a [Vec3],
    pub cov: &'a Mat9,
    pub weight: f64,
}

/// Fuses the bank. A degenerate attitude spectrum keeps the previous fused
/// attitude; other errors propagate.
pub fn fuse(t: f64, members: &[Member<'_>], previous: Option<&FusedEstimate>) -> Result<FusedEstimate> {
    let qs: Vec<Quaternion> = members.iter().map(|m| *m.q).collect();
    let ws: Vec<f64> = members.iter().map(|m| m.weight).collect();
    let q = match markley_average(&qs, &ws, previous.map(|p| &p.q)) {
        Ok(q) => q,
        Err(Error::DegenerateSpectrum(_)) if previous.is_some() => previous.unwrap().q,
        Err(e) => return Err(e),
    };
    let omega = members.iter().fold(Vec3::zeros(), |a, m| a + m.weight * m.omega);
    let bias = members.iter().fold(Vec3::zeros(), |a, m| a + m.weight * m.bias);
    let mus: Vec<Vec<Vec3>> = members.iter().map(|m| m.mu.to_vec()).collect();
    let mu = weighted_mean_mu(&mus, &ws);
    let cov = members.iter().fold(Mat9::zeros(), |a, m| a + m.weight * m.cov);

    let mut mu_spread = vec![Vec3::zeros(); mu.len()];
    let mut state_spread = [0.0; 9];
    for m in members {
        for (k, s) in mu_spread.iter_mut().enumerate() {
            let d = m.mu[k] - mu[k];
            *s += m.weight * d.component_mul(&d);
        }
        let dw = m.omega - omega;
        let db = m.bias - bias;
        let dq = m.q.multiply(&q.conjugate()).to_mrp()?;
        for i in 0..3 {
            state_spread[RATE + i] += m.weight * dw[i] * dw[i];
            state_spread[BIAS + i] += m.weight * db[i] * db[i];
            state_spread[ATTITUDE + i] += m.weight * dq.0[i] * dq.0[i];
        }
    }
    Ok(FusedEstimate {
        t,
        q,
        omega,
        bias,
        mu,
        cov,
        mu_spread,
        state_spread,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotations::principal_angle;
    use approx::assert_relative_eq;

    #[test]
    fn jacobi_diagonalizes() {
        let m = Matrix4::new(
            4.0, 1.0, -2.0, 0.5, //
            1.0, 3.0, 0.0, 0.1, //
            -2.0, 0.0, 1.0, 0.7, //
            0.5, 0.1, 0.7, 2.0,
        );
        let (vals, vecs) = symmetric_eigen4(&m);
        let recon = vecs * Matrix4::from_diagonal(&vals) * vecs.transpose();
        assert!((recon - m).abs().max() <= 1e-13);
        assert!((vecs.transpose() * vecs - Matrix4::identity()).abs().max() <= 1e-14);
    }

    #[test]
    fn average_of_identical() {
        let q = Quaternion::new(0.1, 0.2, -0.3, 0.9);
        let avg = markley_average(&[q, q, q], &[0.2, 0.3, 0.5], None).unwrap();
        assert!(principal_angle(&avg, &q) <= 1e-12);
    }

    #[test]
    fn average_ignores_sign() {
        let q = Quaternion::new(0.1, 0.2, -0.3, 0.9);
        let avg = markley_average(&[q, -q], &[0.3, 0.7], Some(&q)).unwrap();
        assert!((avg.as_vector4() - q.as_vector4()).norm() <= 1e-12);
    }

    #[test]
    fn coplanar_small_rotations() {
        let qs: Vec<Quaternion> = [1.0f64, 2.0, 3.0]
            .iter()
            .map(|d| Quaternion::from_axis_angle(&Vec3::z(), d.to_radians()))
            .collect();
        let avg = markley_average(&qs, &[1.0 / 3.0; 3], None).unwrap();
        // brute-force the chordal cost over rotations about z
        let cost = |a: f64| -> f64 {
            let c = Quaternion::from_axis_angle(&Vec3::z(), a);
            qs.iter()
                .map(|q| (c.as_vector4() - q.aligned_with(&c).as_vector4()).norm_squared())
                .sum()
        };
        let best = (0..=40_000)
            .map(|i| (i as f64 / 10_000.0).to_radians())
            .min_by(|a, b| cost(*a).total_cmp(&cost(*b)))
            .unwrap();
        let angle = avg.to_rotation_vector();
        assert!((angle.z - best).abs() <= 1e-4);
        assert!((angle.z - 2f64.to_radians()).abs() <= 1e-4);
    }

    #[test]
    fn degenerate_spectrum_is_reported() {
        let a = Quaternion::IDENTITY;
        let b = Quaternion::from_axis_angle(&Vec3::x(), std::f64::consts::PI);
        let err = markley_average(&[a, b], &[0.5, 0.5], None).unwrap_err();
        assert!(matches!(err, Error::DegenerateSpectrum(_)));
    }

    #[test]
    fn mean_misalignment() {
        let mus = vec![vec![Vec3::zeros()], vec![Vec3::new(0.01, 0.0, 0.0)]];
        let m = weighted_mean_mu(&mus, &[0.25, 0.75]);
        assert_relative_eq!(m[0].x, 0.0075, epsilon = 1e-15);
        let sym = vec![vec![Vec3::x() * 1e-3], vec![-Vec3::x() * 1e-3]];
        assert_eq!(weighted_mean_mu(&sym, &[0.5, 0.5])[0], Vec3::zeros());
    }

    #[test]
    fn single_member_passes_through() {
        let q = Quaternion::new(0.1, 0.2, -0.3, 0.9);
        let (w, b) = (Vec3::new(0.1, 0.2, 0.3), Vec3::new(1e-3, 0.0, -1e-3));
        let mu = [Vec3::new(1e-3, 2e-3, 3e-3)];
        let cov = Mat9::identity() * 1e-6;
        let f = fuse(
            1.0,
            &[Member {
                q: &q,
                omega: &w,
                bias: &b,
                mu: &mu,
                cov: &cov,
                weight: 1.0,
            }],
            None,
        )
        .unwrap();
        assert!(principal_angle(&f.q, &q) <= 1e-12);
        assert_eq!(f.omega, w);
        assert_eq!(f.bias, b);
        assert_eq!(f.mu, mu.to_vec());
        assert_eq!(f.cov, cov);
        assert_eq!(f.mu_spread[0], Vec3::zeros());
    }
}
