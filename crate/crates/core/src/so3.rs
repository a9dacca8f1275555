//! Rotation algebra on SO(3) and the rotation-disturbance model.
//!
//! A rotation disturbance on a point is a small rotation about the sensor
//! origin. Disturbances on source points (`L`) and target points (`K`) map an
//! exact registration `R*` to `K R* L^T`; the squared Riemannian distance
//! between the two expands into four terms ([`riem_terms`]) whose expectation
//! over ring-shaped disturbance sets is given by [`expected_riem`].

use std::f64::consts::PI;
use std::ops::Mul;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::orthonormal_complement;
use crate::{Error, Mat3, Result, Vec3};

/// Tolerance used when validating orthonormality and determinant.
pub const ROTATION_TOL: f64 = 1e-9;

/// `trace(R) <= -1 + BRANCH_CUT_TOL` is treated as a rotation by pi.
pub const BRANCH_CUT_TOL: f64 = 1e-9;

/// Element of SO(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Mat3);

impl Rotation {
    pub fn identity() -> Self {
        Self(Mat3::identity())
    }

    /// Validates `m^T m = I` and `det m = +1` within [`ROTATION_TOL`].
    pub fn from_matrix(m: Mat3) -> Result<Self> {
        let r = Self(m);
        if r.is_valid(ROTATION_TOL) {
            Ok(r)
        } else {
            Err(Error::InvalidInput("matrix is not a proper rotation".into()))
        }
    }

    /// Wraps `m` without checking. Callers guarantee `m` is a rotation.
    pub fn from_matrix_unchecked(m: Mat3) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        let orth = (self.0.transpose() * self.0 - Mat3::identity()).abs().max();
        orth <= tol && (self.0.determinant() - 1.0).abs() <= tol
    }

    pub fn exp(phi: &RotVec) -> Self {
        exp_so3(phi)
    }

    pub fn log(&self) -> Result<RotVec> {
        log_so3(self)
    }

    /// Uniformly distributed rotation (Haar measure) from a random unit
    /// quaternion.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let q = loop {
            let v = nalgebra::Vector4::<f64>::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let n2 = v.norm_squared();
            if n2 > 1e-6 && n2 <= 1.0 {
                break v / n2.sqrt();
            }
        };
        let uq = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]));
        Self(*uq.to_rotation_matrix().matrix())
    }
}

impl Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<Vec3> for &Rotation {
    type Output = Vec3;

    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// Axis-angle tangent vector `phi = theta * omega`, radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotVec(Vec3);

impl RotVec {
    pub fn new(phi: Vec3) -> Self {
        Self(phi)
    }

    pub fn zero() -> Self {
        Self(Vec3::zeros())
    }

    /// `axis` is normalised; a zero axis yields the zero vector.
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        match axis.try_normalize(0.0) {
            Some(a) => Self(a * angle),
            None => Self::zero(),
        }
    }

    pub fn vector(&self) -> &Vec3 {
        &self.0
    }

    pub fn angle(&self) -> f64 {
        self.0.norm()
    }

    /// Unit axis, `None` for the zero rotation.
    pub fn axis(&self) -> Option<Vec3> {
        self.0.try_normalize(0.0)
    }
}

/// The four terms of the second-order expansion of `Riem(R*, K R* L^T)`.
///
/// `a` and `b` are twice the squared disturbance angles, `c` is the quartic
/// Lie-bracket term and `d` the bilinear coupling between both disturbances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistTerms {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl DistTerms {
    pub fn sum(&self) -> f64 {
        self.a + self.b + self.c + self.d
    }
}

/// Disk-shaped displacement model: a point is moved to a location drawn
/// uniformly (by area) from the disk of radius `epsilon` tangent to the
/// sphere through the point.
#[derive(Debug, Clone)]
pub struct DiskDisturbance {
    epsilon: f64,
    rng: ChaCha8Rng,
}

impl DiskDisturbance {
    pub fn new(epsilon: f64, seed: u64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidInput(format!("disk radius must be positive, got {epsilon}")));
        }
        Ok(Self { epsilon, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Draws the next disturbance rotation for `point`.
    pub fn sample(&mut self, point: &Vec3) -> Result<Rotation> {
        sample_disk_disturbance(self.epsilon, point, &mut self.rng)
    }
}

/// Skew-symmetric matrix with `skew(v) * w == v.cross(w)`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`skew`] for antisymmetric input.
pub fn vee(m: &Mat3) -> Vec3 {
    Vec3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Rodrigues' formula.
pub fn exp_so3(phi: &RotVec) -> Rotation {
    let theta = phi.angle();
    let k = skew(phi.vector());
    let k2 = k * k;
    let m = if theta < 1e-8 {
        Mat3::identity() + k + k2 * 0.5
    } else {
        Mat3::identity() + k * (theta.sin() / theta) + k2 * ((1.0 - theta.cos()) / (theta * theta))
    };
    Rotation(m)
}

/// Principal logarithm. Rotations within [`BRANCH_CUT_TOL`] of angle pi are
/// rejected with [`Error::AngleAtBranchCut`].
pub fn log_so3(r: &Rotation) -> Result<RotVec> {
    let m = r.matrix();
    let trace = m.trace();
    if trace <= -1.0 + BRANCH_CUT_TOL {
        return Err(Error::AngleAtBranchCut { trace });
    }
    // 2 sin(theta) * omega
    let w = vee(&(m - m.transpose()));
    let sin_theta = 0.5 * w.norm();
    let cos_theta = 0.5 * (trace - 1.0);
    let theta = sin_theta.atan2(cos_theta);
    let scale = if sin_theta < 1e-12 {
        // theta/sin(theta) ~ 1 + theta^2/6
        0.5 * (1.0 + theta * theta / 6.0)
    } else {
        0.5 * theta / sin_theta
    };
    Ok(RotVec(w * scale))
}

/// Squared Frobenius norm of `log(R1^T R2)`, i.e. `2 theta^2` for the
/// relative angle `theta`.
pub fn riem_distance(r1: &Rotation, r2: &Rotation) -> Result<f64> {
    let rel = r1.transpose() * *r2;
    let phi = log_so3(&rel)?;
    Ok(2.0 * phi.vector().norm_squared())
}

/// Expansion terms of `Riem(R*, K R* L^T)` with `K = exp(phi_k)`,
/// `L = exp(phi_l)`.
///
/// The target disturbance enters through its pull-back into the source
/// frame, `g = R*^T phi_k`, since `R*^T K R* = exp(g^)`. With that:
///
/// ```text
/// a = 2 |g|^2,  b = 2 |phi_l|^2,  c = 1/2 |g x phi_l|^2,  d = -4 g . phi_l
/// ```
///
/// `a + b + d` is exact to second order. The truncation error is quartic in
/// the angles, so the expansion is only meaningful for small disturbances
/// (below roughly 0.2 rad); larger inputs are not rejected.
pub fn riem_terms(r_star: &Rotation, phi_k: &RotVec, phi_l: &RotVec) -> DistTerms {
    let g = r_star.matrix().transpose() * phi_k.vector();
    let l = phi_l.vector();
    DistTerms {
        a: 2.0 * g.norm_squared(),
        b: 2.0 * l.norm_squared(),
        c: 0.5 * g.cross(l).norm_squared(),
        d: -4.0 * g.dot(l),
    }
}

/// Closed-form expectation of the Riemannian distance over ring
/// disturbances of fixed magnitudes.
pub fn expected_riem(theta_k: f64, theta_l: f64) -> f64 {
    let (k2, l2) = (theta_k * theta_k, theta_l * theta_l);
    2.0 * k2 + 2.0 * l2 + k2 * l2 / 4.0
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Monte-Carlo averages of the exact distance and of the `c` and `d`
/// expansion terms over the same samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingStats {
    pub riem: McEstimate,
    pub c_term: McEstimate,
    pub d_term: McEstimate,
}

#[derive(Default)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn estimate(&self) -> McEstimate {
        let var = if self.n > 1 { self.m2 / (self.n - 1) as f64 } else { 0.0 };
        McEstimate { mean: self.mean, stderr: (var / self.n as f64).sqrt() }
    }
}

/// Monte-Carlo estimate of `E[Riem(R*, K R* L^T)]`.
///
/// A ground-truth rotation and a source point are drawn once from `seed`.
/// Each trial places the axis of `L` uniformly on the unit circle
/// perpendicular to the source point and the axis of `K` uniformly on the
/// circle perpendicular to the matching target point, with fixed angles
/// `theta_l` and `theta_k`.
pub fn mc_expected_riem(theta_k: f64, theta_l: f64, trials: usize, seed: u64) -> McEstimate {
    mc_ring_stats(theta_k, theta_l, trials, seed).riem
}

/// Same sampling as [`mc_expected_riem`], also averaging the `c` and `d`
/// terms of [`riem_terms`].
pub fn mc_ring_stats(theta_k: f64, theta_l: f64, trials: usize, seed: u64) -> RingStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r_star = Rotation::random(&mut rng);
    let p = random_unit(&mut rng);
    let q = r_star.apply(&p);
    let (p1, p2) = orthonormal_complement(&p);
    let (q1, q2) = orthonormal_complement(&q);

    let (mut riem, mut c, mut d) = (Welford::default(), Welford::default(), Welford::default());
    for _ in 0..trials {
        let ap: f64 = rng.gen_range(0.0..2.0 * PI);
        let aq: f64 = rng.gen_range(0.0..2.0 * PI);
        let phi_l = RotVec((p1 * ap.cos() + p2 * ap.sin()) * theta_l);
        let phi_k = RotVec((q1 * aq.cos() + q2 * aq.sin()) * theta_k);
        let disturbed = exp_so3(&phi_k) * r_star * exp_so3(&phi_l).transpose();
        // Angles well below pi never reach the branch cut.
        riem.push(riem_distance(&r_star, &disturbed).unwrap_or(f64::NAN));
        let terms = riem_terms(&r_star, &phi_k, &phi_l);
        c.push(terms.c);
        d.push(terms.d);
    }
    RingStats { riem: riem.estimate(), c_term: c.estimate(), d_term: d.estimate() }
}

/// Rotation about the origin that moves `point` to a location whose
/// projection onto the tangent plane is uniform (by area) on the disk of
/// radius `epsilon` centred at `point`.
///
/// The tangential offset `h` is realised exactly: the rotation angle is
/// `asin(h / |point|)` about the axis `point x offset_direction`.
pub fn sample_disk_disturbance<R: Rng + ?Sized>(epsilon: f64, point: &Vec3, rng: &mut R) -> Result<Rotation> {
    let (unit, dir, sin_theta) = disk_draw(epsilon, point, rng)?;
    let axis = unit.cross(&dir);
    Ok(exp_so3(&RotVec(axis * sin_theta.asin())))
}

/// The point moved by the rotation [`sample_disk_disturbance`] returns for
/// the same random draws, without forming the rotation. Since the axis is
/// perpendicular to the point, the image is `cos(theta) p + h * dir`.
pub fn disk_displace<R: Rng + ?Sized>(epsilon: f64, point: &Vec3, rng: &mut R) -> Result<Vec3> {
    let (_, dir, sin_theta) = disk_draw(epsilon, point, rng)?;
    let norm = point.norm();
    Ok(point * (1.0 - sin_theta * sin_theta).sqrt() + dir * (sin_theta * norm))
}

/// Unit point direction, tangential offset direction and `h / |point|`.
fn disk_draw<R: Rng + ?Sized>(epsilon: f64, point: &Vec3, rng: &mut R) -> Result<(Vec3, Vec3, f64)> {
    let norm = point.norm();
    if norm <= epsilon {
        return Err(Error::PointTooShort { norm, epsilon });
    }
    let (e1, e2) = orthonormal_complement(point);
    let u: f64 = rng.gen();
    let beta: f64 = rng.gen_range(0.0..2.0 * PI);
    let h = epsilon * u.sqrt();
    let dir = e1 * beta.cos() + e2 * beta.sin();
    Ok((point / norm, dir, h / norm))
}

pub(crate) fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}
