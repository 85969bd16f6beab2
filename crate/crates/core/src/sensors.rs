//! Synthetic star-tracker and gyro measurements, TRIAD attitude
//! determination, and the reference star catalog.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rotations::{radec_to_unit, Dcm, Mat3, Mrp, Quaternion, Vec3};

/// Cross-product norm below which two directions count as collinear.
pub const COLLINEAR_THRESHOLD: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// Gaussian vector noise added to the rotated direction, then renormalized.
    Additive,
    /// Small random rotation with MRP components drawn from the noise law.
    Multiplicative,
}

pub(crate) fn gaussian3<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> Vec3 {
    Vec3::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    ) * sigma
}

pub fn measure_vectors_additive<R: Rng + ?Sized>(
    c_bi: &Dcm,
    refs: &[Vec3],
    sigma: f64,
    rng: &mut R,
) -> Vec<Vec3> {
    refs.iter()
        .map(|v| (c_bi.apply(v) + gaussian3(rng, sigma)).normalize())
        .collect()
}

pub fn measure_vectors_multiplicative<R: Rng + ?Sized>(
    c_bi: &Dcm,
    refs: &[Vec3],
    sigma: f64,
    rng: &mut R,
) -> Vec<Vec3> {
    refs.iter()
        .map(|v| {
            let c_eta = Mrp(gaussian3(rng, sigma)).to_dcm();
            c_eta.apply(&c_bi.apply(v))
        })
        .collect()
}

pub fn measure_vectors<R: Rng + ?Sized>(
    model: NoiseModel,
    c_bi: &Dcm,
    refs: &[Vec3],
    sigma: f64,
    rng: &mut R,
) -> Vec<Vec3> {
    match model {
        NoiseModel::Additive => measure_vectors_additive(c_bi, refs, sigma, rng),
        NoiseModel::Multiplicative => measure_vectors_multiplicative(c_bi, refs, sigma, rng),
    }
}

fn triad_basis(v1: &Vec3, v2: &Vec3) -> Result<Mat3> {
    let t1 = v1.normalize();
    let cross = v1.cross(v2);
    let n = cross.norm();
    if !(n > COLLINEAR_THRESHOLD) {
        return Err(Error::CollinearVectors { cross_norm: n });
    }
    let t2 = cross / n;
    let t3 = t1.cross(&t2);
    Ok(Mat3::from_columns(&[t1, t2, t3]))
}

/// Two-vector attitude determination. Returns the inertial-to-body DCM.
pub fn triad(v1_i: &Vec3, v2_i: &Vec3, v1_b: &Vec3, v2_b: &Vec3) -> Result<Dcm> {
    let t_i = triad_basis(v1_i, v2_i)?;
    let t_b = triad_basis(v1_b, v2_b)?;
    Ok(Dcm::from_matrix_unchecked(t_b * t_i.transpose()))
}

/// TRIAD on the first two vectors of each list, as a quaternion.
pub fn triad_quaternion(refs: &[Vec3], observed: &[Vec3]) -> Result<Quaternion> {
    if refs.len() < 2 || observed.len() < 2 {
        return Err(Error::LengthMismatch {
            expected: 2,
            found: refs.len().min(observed.len()),
        });
    }
    Ok(triad(&refs[0], &refs[1], &observed[0], &observed[1])?.to_quaternion())
}

/// Least-squares attitude from any number of vector pairs with equal weights
/// (SVD solution of Wahba's problem). Returns the inertial-to-body DCM.
pub fn wahba(refs: &[Vec3], observed: &[Vec3]) -> Result<Dcm> {
    if refs.len() < 2 || refs.len() != observed.len() {
        return Err(Error::LengthMismatch {
            expected: refs.len().max(2),
            found: observed.len(),
        });
    }
    let b: Mat3 = refs
        .iter()
        .zip(observed)
        .map(|(r, o)| o.normalize() * r.normalize().transpose())
        .sum();
    let svd = b.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let sv = svd.singular_values;
    // Collinear pairs leave only one non-zero singular value.
    if sv.iter().filter(|s| **s > COLLINEAR_THRESHOLD).count() < 2 {
        return Err(Error::CollinearVectors { cross_norm: sv.min() });
    }
    let d = (u.determinant() * v_t.determinant()).signum();
    let c = u * Mat3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * v_t;
    Ok(Dcm::from_matrix_unchecked(c))
}

pub fn measure_gyro<R: Rng + ?Sized>(omega: &Vec3, bias: &Vec3, sigma: f64, rng: &mut R) -> Vec3 {
    omega + bias + gaussian3(rng, sigma)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StarCatalogEntry {
    pub name: String,
    pub ra_deg: f64,
    pub dec_deg: f64,
    #[serde(skip)]
    unit: Vec3,
}

impl StarCatalogEntry {
    pub fn new(name: impl Into<String>, ra_deg: f64, dec_deg: f64) -> Self {
        Self {
            name: name.into(),
            ra_deg,
            dec_deg,
            unit: radec_to_unit(ra_deg, dec_deg),
        }
    }

    /// Inertial unit direction.
    pub fn unit(&self) -> Vec3 {
        self.unit
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StarCatalog {
    entries: Vec<StarCatalogEntry>,
}

#[derive(Deserialize)]
struct CatalogRow {
    name: String,
    ra_deg: f64,
    dec_deg: f64,
}

impl StarCatalog {
    pub fn new(entries: Vec<StarCatalogEntry>) -> Self {
        Self { entries }
    }

    /// Sirius, Adhara and Canopus for the first tracker; Deneb, Sadr and
    /// Albireo for the second.
    pub fn default_dual() -> Self {
        Self::new(vec![
            StarCatalogEntry::new("Sirius", 101.287136, -16.716113),
            StarCatalogEntry::new("Adhara", 104.656433, -28.972074),
            StarCatalogEntry::new("Canopus", 95.987990, -52.695671),
            StarCatalogEntry::new("Deneb", 310.357979, 45.280339),
            StarCatalogEntry::new("Sadr", 305.164999, 40.256708),
            StarCatalogEntry::new("Albireo", 292.680371, 27.959678),
        ])
    }

    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut entries = Vec::new();
        for row in rdr.deserialize::<CatalogRow>() {
            let row = row?;
            if !(-90.0..=90.0).contains(&row.dec_deg) {
                return Err(Error::InvalidConfig(format!(
                    "star {} has declination {} outside [-90, 90]",
                    row.name, row.dec_deg
                )));
            }
            entries.push(StarCatalogEntry::new(row.name, row.ra_deg, row.dec_deg));
        }
        Ok(Self::new(entries))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["name", "ra_deg", "dec_deg"])?;
        for e in &self.entries {
            w.write_record([e.name.clone(), e.ra_deg.to_string(), e.dec_deg.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn entries(&self) -> &[StarCatalogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&StarCatalogEntry> {
        self.entries.get(index)
    }

    pub fn units(&self, indices: &[usize]) -> Result<Vec<Vec3>> {
        indices
            .iter()
            .map(|&i| {
                self.get(i).map(|e| e.unit()).ok_or_else(|| {
                    Error::InvalidConfig(format!(
                        "star index {i} outside catalog of {} entries",
                        self.len()
                    ))
                })
            })
            .collect()
    }
}

/// Star tracker mounted with a small rotation `μ` (rotation vector, rad)
/// between the body frame and its sensor frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub star_indices: Vec<usize>,
    pub misalignment: [f64; 3],
}

impl TrackerConfig {
    pub fn misalignment_quaternion(&self) -> Quaternion {
        Quaternion::from_rotation_vector(&Vec3::from(self.misalignment))
    }

    /// Checks that the tracker sees at least two stars and no pair is within
    /// one degree of each other.
    pub fn validate(&self, catalog: &StarCatalog) -> Result<()> {
        let units = catalog.units(&self.star_indices)?;
        if units.len() < 2 {
            return Err(Error::InvalidConfig(
                "each tracker needs at least two stars".into(),
            ));
        }
        for (a, u) in units.iter().enumerate() {
            for v in &units[a + 1..] {
                if u.dot(v).clamp(-1.0, 1.0).acos() <= 1f64.to_radians() {
                    return Err(Error::InvalidConfig(
                        "tracker stars closer than one degree".into(),
                    ));
                }
            }
        }
        let mu = Vec3::from(self.misalignment).norm();
        if !(mu < 0.1) {
            return Err(Error::InvalidConfig(format!(
                "misalignment magnitude {mu} rad is not small"
            )));
        }
        Ok(())
    }
}

/// Noise-free sensor-frame directions `C_μ·C_q·v` for one tracker.
pub fn predict_los(q: &Quaternion, q_mu: &Quaternion, refs: &[Vec3]) -> Vec<Vec3> {
    let c = q_mu.multiply(q).to_dcm();
    refs.iter().map(|v| c.apply(v)).collect()
}

/// Stacked line-of-sight measurements of every tracker, in tracker order,
/// with additive Gaussian noise on each component.
pub fn measure_los_dual<R: Rng + ?Sized>(
    q_true: &Quaternion,
    trackers: &[TrackerConfig],
    catalog: &StarCatalog,
    sigma: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let mut out = Vec::new();
    for tracker in trackers {
        let refs = catalog.units(&tracker.star_indices)?;
        for v in predict_los(q_true, &tracker.misalignment_quaternion(), &refs) {
            let y = v + gaussian3(rng, sigma);
            out.extend_from_slice(y.as_slice());
        }
    }
    Ok(DVector::from_vec(out))
}
