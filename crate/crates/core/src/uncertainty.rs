//! Measurement covariance of a spinning LiDAR beam, sigma-point fusion of
//! neighbourhood ellipsoids, and the scalar residual uncertainty.
//!
//! Beam geometry: a return is the local point `(x, y, z)` (nominally
//! `(0, 0, depth)`) rotated by `R(alpha, omega) = R_y(alpha) * R_x(-omega)`.
//! The scanner frame therefore has `y` vertical and `z` forward at zero
//! azimuth; `alpha` is the azimuth about `y` and `omega` the elevation.

use nalgebra::{Matrix3x5, SMatrix, Vector5};

use crate::linalg::{sym3_eigen_sorted, sym3_eigenvalues};
use crate::residual::ResidualKind;
use crate::{Error, Mat3, Result, Vec3};

pub type Mat5 = SMatrix<f64, 5, 5>;

/// Lower bound on the scalar uncertainty so scores stay finite on noise-free
/// synthetic data.
pub const UNCERTAINTY_FLOOR: f64 = 1e-8;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Per-sensor noise parameters. Angles are radians, `delta_z` metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamModel {
    /// Depth accuracy (half-width of a uniform error).
    pub delta_z: f64,
    /// Horizontal beam divergence.
    pub delta_h: f64,
    /// Vertical beam divergence.
    pub delta_v: f64,
    /// Half azimuth resolution.
    pub delta_alpha: f64,
    /// Elevation standard deviation.
    pub sigma_omega: f64,
}

impl BeamModel {
    pub fn new(delta_z: f64, delta_h: f64, delta_v: f64, delta_alpha: f64, sigma_omega: f64) -> Result<Self> {
        let m = Self { delta_z, delta_h, delta_v, delta_alpha, sigma_omega };
        if [delta_z, delta_h, delta_v, delta_alpha, sigma_omega].iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput(format!("beam parameters must be finite and >= 0: {m:?}")));
        }
        Ok(m)
    }

    /// Velodyne VLP-16 datasheet values.
    pub fn vlp16() -> Self {
        Self {
            delta_z: 0.03,
            delta_h: 3e-3,
            delta_v: 1.5e-3,
            delta_alpha: 0.005_f64.to_radians(),
            sigma_omega: 0.0,
        }
    }

    pub fn zero() -> Self {
        Self { delta_z: 0.0, delta_h: 0.0, delta_v: 0.0, delta_alpha: 0.0, sigma_omega: 0.0 }
    }

    /// Standard deviations `(x, y, z, alpha, omega)` at the given depth.
    /// Uniform error models, hence the `1/sqrt(3)`.
    pub fn sigmas(&self, depth: f64) -> Vector5<f64> {
        Vector5::new(
            depth * (self.delta_v / 2.0).tan() / SQRT3,
            depth * (self.delta_h / 2.0).tan() / SQRT3,
            self.delta_z / SQRT3,
            self.delta_alpha / SQRT3,
            self.sigma_omega,
        )
    }

    /// Covariance of a nominal return expressed in its own beam frame, where
    /// it is diagonal: footprint plus angular terms on `x` and `y`, depth on
    /// `z`. Its entries are the eigenvalues of the scanner-frame covariance.
    pub fn beam_frame_variances(&self, depth: f64, omega: f64) -> Vec3 {
        BeamNoise::new(self).variances(depth, omega.cos())
    }
}

/// Depth-independent factors of a [`BeamModel`], precomputed for hot loops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamNoise {
    footprint_x: f64,
    footprint_y: f64,
    depth_var: f64,
    alpha_var: f64,
    omega_var: f64,
}

impl BeamNoise {
    pub fn new(b: &BeamModel) -> Self {
        let s = b.sigmas(1.0);
        Self {
            footprint_x: s[0] * s[0],
            footprint_y: s[1] * s[1],
            depth_var: s[2] * s[2],
            alpha_var: s[3] * s[3],
            omega_var: s[4] * s[4],
        }
    }

    /// Beam-frame variances at `depth` and elevation cosine `cos_omega`.
    pub fn variances(&self, depth: f64, cos_omega: f64) -> Vec3 {
        let d2 = depth * depth;
        Vec3::new(
            d2 * (self.footprint_x + self.alpha_var * cos_omega * cos_omega),
            d2 * (self.footprint_y + self.omega_var),
            self.depth_var,
        )
    }

    /// Scanner-frame covariance of a return at `p`; zero at the origin.
    pub fn covariance_at(&self, p: &Vec3) -> Mat3 {
        let depth = p.norm();
        if depth == 0.0 {
            return Mat3::zeros();
        }
        let u = p / depth;
        let r = beam_rotation_from_direction(&u);
        let d = self.variances(depth, (u.x * u.x + u.z * u.z).sqrt());
        let mut cov = Mat3::zeros();
        for k in 0..3 {
            let c = r.column(k);
            cov += c * c.transpose() * d[k];
        }
        cov
    }

    /// Ascending eigenvalues of [`BeamNoise::covariance_at`].
    pub fn eigenvalues_at(&self, p: &Vec3) -> Vec3 {
        let depth = p.norm();
        let cos_omega = if depth > 0.0 { (p.x * p.x + p.z * p.z).sqrt() / depth } else { 1.0 };
        let mut v = self.variances(depth, cos_omega);
        v.as_mut_slice().sort_by(f64::total_cmp);
        v
    }
}

impl Default for BeamModel {
    fn default() -> Self {
        Self::vlp16()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaserSample {
    pub alpha: f64,
    pub omega: f64,
    pub depth: f64,
}

impl LaserSample {
    pub fn new(alpha: f64, omega: f64, depth: f64) -> Result<Self> {
        if !(depth > 0.0) {
            return Err(Error::InvalidInput(format!("depth must be positive, got {depth}")));
        }
        Ok(Self { alpha, omega, depth })
    }

    /// Beam angles and depth of a scanner-frame point.
    pub fn from_point(p: &Vec3) -> Result<Self> {
        let depth = p.norm();
        if !(depth > 0.0) {
            return Err(Error::InvalidInput("cannot take beam angles of the origin".into()));
        }
        let omega = (p.y / depth).clamp(-1.0, 1.0).asin();
        let alpha = p.x.atan2(p.z);
        Ok(Self { alpha, omega, depth })
    }

    pub fn rotation(&self) -> Mat3 {
        beam_rotation(self.alpha, self.omega)
    }

    pub fn point(&self) -> Vec3 {
        self.rotation() * Vec3::new(0.0, 0.0, self.depth)
    }
}

/// `R_y(alpha) * R_x(-omega)`.
pub fn beam_rotation(alpha: f64, omega: f64) -> Mat3 {
    let (sa, ca) = alpha.sin_cos();
    let (so, co) = omega.sin_cos();
    Mat3::new(
        ca, -sa * so, sa * co,
        0.0, co, so,
        -sa, -ca * so, ca * co,
    )
}

/// Beam rotation built from a unit direction without trigonometry. Columns
/// are the beam-frame axes. A vertical direction takes zero azimuth.
fn beam_rotation_from_direction(u: &Vec3) -> Mat3 {
    let co = (u.x * u.x + u.z * u.z).sqrt();
    let (sa, ca) = if co > 0.0 { (u.x / co, u.z / co) } else { (0.0, 1.0) };
    let so = u.y;
    Mat3::new(
        ca, -sa * so, u.x,
        0.0, co, u.y,
        -sa, -ca * so, u.z,
    )
}

/// `diag(sigma_x^2, sigma_y^2, sigma_z^2, sigma_alpha^2, sigma_omega^2)`.
pub fn beam_sigma_l(b: &BeamModel, s: &LaserSample) -> Mat5 {
    Mat5::from_diagonal(&b.sigmas(s.depth).map(|v| v * v))
}

/// Partial derivatives of `R(alpha, omega) * local` with respect to
/// `(x, y, z, alpha, omega)`.
pub fn beam_jacobian(s: &LaserSample, local: &Vec3) -> Matrix3x5<f64> {
    let (sa, ca) = s.alpha.sin_cos();
    let (so, co) = s.omega.sin_cos();
    let r = beam_rotation(s.alpha, s.omega);
    let rx = Mat3::new(1.0, 0.0, 0.0, 0.0, co, so, 0.0, -so, co);
    let ry = Mat3::new(ca, 0.0, sa, 0.0, 1.0, 0.0, -sa, 0.0, ca);
    let d_ry = Mat3::new(-sa, 0.0, ca, 0.0, 0.0, 0.0, -ca, 0.0, -sa);
    let d_rx = Mat3::new(0.0, 0.0, 0.0, 0.0, -so, co, 0.0, -co, -so);
    let d_alpha = d_ry * rx * local;
    let d_omega = ry * d_rx * local;
    let mut j = Matrix3x5::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    j.set_column(3, &d_alpha);
    j.set_column(4, &d_omega);
    j
}

/// Scanner-frame covariance `J * Sigma_l * J^T` of the nominal return.
pub fn beam_covariance(b: &BeamModel, s: &LaserSample) -> Ellipsoid3 {
    let j = beam_jacobian(s, &Vec3::new(0.0, 0.0, s.depth));
    let cov = j * beam_sigma_l(b, s) * j.transpose();
    Ellipsoid3::from_parts(s.point(), cov)
}

/// Same covariance as [`beam_covariance`] for a return at `p`, assembled from
/// the diagonal beam-frame form. Returns zero covariance at the origin.
pub fn beam_covariance_at(b: &BeamModel, p: &Vec3) -> Mat3 {
    BeamNoise::new(b).covariance_at(p)
}

/// Sorted eigenvalues of the beam covariance at `p`.
pub fn beam_eigenvalues_at(b: &BeamModel, p: &Vec3) -> Vec3 {
    BeamNoise::new(b).eigenvalues_at(p)
}

/// A 3D Gaussian: mean and symmetric positive semi-definite covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipsoid3 {
    pub mean: Vec3,
    pub cov: Mat3,
}

impl Ellipsoid3 {
    pub fn new(mean: Vec3, cov: Mat3) -> Result<Self> {
        let asym = (cov - cov.transpose()).amax();
        if !(asym <= 1e-12 * cov.amax().max(1.0)) {
            return Err(Error::InvalidInput(format!("covariance is not symmetric (max asymmetry {asym:e})")));
        }
        let e = Self::from_parts(mean, cov);
        let lo = sym3_eigenvalues(&e.cov)[0];
        if lo < -1e-12 * cov.amax().max(1.0) {
            return Err(Error::InvalidInput(format!("covariance is not positive semi-definite (eigenvalue {lo:e})")));
        }
        Ok(e)
    }

    /// Symmetrises `cov` without further checks.
    pub fn from_parts(mean: Vec3, cov: Mat3) -> Self {
        Self { mean, cov: (cov + cov.transpose()) * 0.5 }
    }

    pub fn point(mean: Vec3) -> Self {
        Self { mean, cov: Mat3::zeros() }
    }

    /// Eigenvalues ascending, clamped at zero.
    pub fn eigenvalues(&self) -> Vec3 {
        sym3_eigenvalues(&self.cov).map(|v| v.max(0.0))
    }

    /// Clamped ascending eigenvalues with their eigenvectors as columns.
    pub fn eigen(&self) -> (Vec3, Mat3) {
        let (vals, vecs) = sym3_eigen_sorted(&self.cov);
        (vals.map(|v| v.max(0.0)), vecs)
    }

    /// The mean followed by `mean -/+ sqrt(lambda_k) * nu_k` for k = 0, 1, 2.
    pub fn sigma_points(&self) -> [Vec3; 7] {
        let (vals, vecs) = self.eigen();
        let mut pts = [self.mean; 7];
        for k in 0..3 {
            let offset = vecs.column(k) * vals[k].sqrt();
            pts[1 + 2 * k] = self.mean - offset;
            pts[2 + 2 * k] = self.mean + offset;
        }
        pts
    }
}

/// Weights for [`Ellipsoid3::sigma_points`]: the one-sigma unscented set in
/// three dimensions. They sum to one and reproduce the covariance exactly.
pub const SIGMA_WEIGHTS: [f64; 7] = [-2.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5];

/// Fuses neighbouring ellipsoids into one pattern ellipsoid by pooling each
/// neighbour's sigma points (neighbours weighted equally).
///
/// Evaluated through the moment identity the weighted pool satisfies:
/// population covariance of the means plus the average neighbour covariance.
pub fn pattern_ellipsoid(neighbors: &[Ellipsoid3]) -> Result<Ellipsoid3> {
    if neighbors.len() < 2 {
        return Err(Error::TooFewNeighbors { required: 2, got: neighbors.len() });
    }
    let n = neighbors.len() as f64;
    let mean = neighbors.iter().map(|e| e.mean).sum::<Vec3>() / n;
    let mut cov = Mat3::zeros();
    for e in neighbors {
        let d = e.mean - mean;
        cov += d * d.transpose() + e.cov;
    }
    Ok(Ellipsoid3::from_parts(mean, cov / n))
}

/// Pattern ellipsoid of bare points, each carrying its beam covariance.
pub fn pattern_from_points(b: &BeamModel, points: &[Vec3]) -> Result<Ellipsoid3> {
    let neighbors: Vec<Ellipsoid3> =
        points.iter().map(|p| Ellipsoid3::from_parts(*p, beam_covariance_at(b, p))).collect();
    pattern_ellipsoid(&neighbors)
}

/// Scalar uncertainty of a residual from source and target eigenvalues:
/// the smallest eigenvalue for planes, the two smallest for lines, averaged
/// over both sides and floored at [`UNCERTAINTY_FLOOR`].
pub fn uncertainty_from_eigenvalues(source: &Vec3, target: &Vec3, kind: ResidualKind) -> f64 {
    let phi = match kind {
        ResidualKind::Plane => (source[0] + target[0]) / 2.0,
        ResidualKind::Line => (source[0] + source[1] + target[0] + target[1]) / 4.0,
    };
    phi.max(UNCERTAINTY_FLOOR)
}

pub fn residual_uncertainty(source: &Ellipsoid3, target: &Ellipsoid3, kind: ResidualKind) -> f64 {
    uncertainty_from_eigenvalues(&source.eigenvalues(), &target.eigenvalues(), kind)
}
