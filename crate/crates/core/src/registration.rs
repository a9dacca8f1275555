//! Closed-form point-to-point registration (Wahba / Kabsch).

use nalgebra::SVD;

use crate::so3::Rotation;
use crate::{Error, Mat3, Result, Vec3};

/// Minimum number of correspondences accepted by [`PointPairSet`].
pub const MIN_PAIRS: usize = 4;

/// Singular-value ratio below which the correlation matrix is treated as
/// rank deficient.
const RANK_TOL: f64 = 1e-12;

/// Corresponding source and target points, in metres.
#[derive(Debug, Clone, PartialEq)]
pub struct PointPairSet {
    source: Vec<Vec3>,
    target: Vec<Vec3>,
}

impl PointPairSet {
    pub fn new(source: Vec<Vec3>, target: Vec<Vec3>) -> Result<Self> {
        if source.len() != target.len() {
            return Err(Error::InvalidInput(format!(
                "source has {} points, target has {}",
                source.len(),
                target.len()
            )));
        }
        if source.len() < MIN_PAIRS {
            return Err(Error::InvalidInput(format!("need at least {MIN_PAIRS} pairs, got {}", source.len())));
        }
        Ok(Self { source, target })
    }

    pub fn source(&self) -> &[Vec3] {
        &self.source
    }

    pub fn target(&self) -> &[Vec3] {
        &self.target
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    /// Applies one rotation to every source point and another to every
    /// target point.
    pub fn disturbed(&self, source_rot: &Rotation, target_rot: &Rotation) -> Self {
        Self {
            source: self.source.iter().map(|p| source_rot.apply(p)).collect(),
            target: self.target.iter().map(|q| target_rot.apply(q)).collect(),
        }
    }
}

/// Rigid transform `x -> r x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidPose {
    pub r: Rotation,
    pub t: Vec3,
}

impl RigidPose {
    pub fn identity() -> Self {
        Self { r: Rotation::identity(), t: Vec3::zeros() }
    }

    pub fn new(r: Rotation, t: Vec3) -> Self {
        Self { r, t }
    }

    pub fn transform(&self, p: &Vec3) -> Vec3 {
        self.r.apply(p) + self.t
    }
}

impl Default for RigidPose {
    fn default() -> Self {
        Self::identity()
    }
}

/// Rotation minimising `sum |R p_i - q_i|^2`.
///
/// With `H = sum p q^T = U S V^T` the optimum is `V D U^T`, where
/// `D = diag(1, 1, det(V U^T))` keeps the result a proper rotation.
pub fn solve_rotation(pairs: &PointPairSet) -> Result<Rotation> {
    let h: Mat3 = pairs
        .source
        .iter()
        .zip(&pairs.target)
        .map(|(p, q)| p * q.transpose())
        .sum();
    rotation_from_correlation(&h)
}

fn rotation_from_correlation(h: &Mat3) -> Result<Rotation> {
    // Singular values come back sorted in descending order.
    let svd = SVD::new(*h, true, true);
    let sv = svd.singular_values;
    if !(sv[0] > 0.0) || sv[1] <= RANK_TOL * sv[0] {
        return Err(Error::DegenerateConfiguration);
    }
    let u = svd.u.ok_or(Error::DegenerateConfiguration)?;
    let v = svd.v_t.ok_or(Error::DegenerateConfiguration)?.transpose();
    let mut d = Mat3::identity();
    d[(2, 2)] = (v * u.transpose()).determinant().signum();
    Ok(Rotation::from_matrix_unchecked(v * d * u.transpose()))
}

/// Rotation and translation minimising `sum |R p_i + t - q_i|^2`, solved on
/// centroid-subtracted sets.
pub fn solve_rigid(pairs: &PointPairSet) -> Result<RigidPose> {
    let n = pairs.len() as f64;
    let p_bar = pairs.source.iter().sum::<Vec3>() / n;
    let q_bar = pairs.target.iter().sum::<Vec3>() / n;
    let h: Mat3 = pairs
        .source
        .iter()
        .zip(&pairs.target)
        .map(|(p, q)| (p - p_bar) * (q - q_bar).transpose())
        .sum();
    let r = rotation_from_correlation(&h)?;
    let t = q_bar - r.apply(&p_bar);
    Ok(RigidPose { r, t })
}

/// Frobenius distance between the rotation solved from disturbed pairs and
/// the prediction `K R* L^T`, where every source point is rotated by `l` and
/// every target point by `k`.
pub fn check_rotation_under_disturbance(
    r_star: &Rotation,
    l: &Rotation,
    k: &Rotation,
    pairs: &PointPairSet,
) -> Result<f64> {
    let solved = solve_rotation(&pairs.disturbed(l, k))?;
    let predicted = *k * *r_star * l.transpose();
    Ok((solved.matrix() - predicted.matrix()).norm())
}

/// Sum of squared point-to-point residuals under `pose`.
pub fn alignment_cost(pairs: &PointPairSet, pose: &RigidPose) -> f64 {
    pairs
        .source
        .iter()
        .zip(&pairs.target)
        .map(|(p, q)| (pose.transform(p) - q).norm_squared())
        .sum()
}
