//! Point-to-plane and point-to-line residuals.
//!
//! Jacobians are taken with respect to a small pose increment `(r, t)`
//! applied on the left of the measured point, `p -> (I + r^) p + t`, at the
//! identity. Solvers re-linearise by substituting the currently transformed
//! point for `p`.

use nalgebra::{Matrix3x6, Matrix6};

use crate::registration::RigidPose;
use crate::so3::skew;
use crate::{Error, Mat3, Result, Vec3, Vec6};

const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ResidualKind {
    Plane,
    Line,
}

impl ResidualKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ResidualKind::Plane => "plane",
            ResidualKind::Line => "line",
        }
    }
}

fn check_unit(n: &Vec3) -> Result<()> {
    if (n.norm() - 1.0).abs() > UNIT_TOL {
        return Err(Error::InvalidInput(format!("direction must be unit length, |n| = {}", n.norm())));
    }
    Ok(())
}

/// Measured point `p`, a point `q` on the plane and the unit normal `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneResidual {
    pub p: Vec3,
    pub q: Vec3,
    pub n: Vec3,
}

impl PlaneResidual {
    pub fn new(p: Vec3, q: Vec3, n: Vec3) -> Result<Self> {
        check_unit(&n)?;
        Ok(Self { p, q, n })
    }
}

/// Measured point `p`, a point `q` on the line and the unit direction `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineResidual {
    pub p: Vec3,
    pub q: Vec3,
    pub n: Vec3,
}

impl LineResidual {
    pub fn new(p: Vec3, q: Vec3, n: Vec3) -> Result<Self> {
        check_unit(&n)?;
        Ok(Self { p, q, n })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Residual {
    Plane(PlaneResidual),
    Line(LineResidual),
}

impl Residual {
    pub fn kind(&self) -> ResidualKind {
        match self {
            Residual::Plane(_) => ResidualKind::Plane,
            Residual::Line(_) => ResidualKind::Line,
        }
    }

    pub fn point(&self) -> &Vec3 {
        match self {
            Residual::Plane(r) => &r.p,
            Residual::Line(r) => &r.p,
        }
    }

    /// Same model with the measured point replaced.
    pub fn with_point(&self, p: Vec3) -> Self {
        match *self {
            Residual::Plane(r) => Residual::Plane(PlaneResidual { p, ..r }),
            Residual::Line(r) => Residual::Line(LineResidual { p, ..r }),
        }
    }

    /// Squared distance of the transformed point to the model.
    pub fn squared_error(&self, pose: &RigidPose) -> f64 {
        match self {
            Residual::Plane(r) => plane_error(r, pose).powi(2),
            Residual::Line(r) => line_distance_vector(r, pose).norm_squared(),
        }
    }

    pub fn sensitivity(&self) -> SensitivityVector {
        axis_sensitivity(self)
    }
}

impl From<PlaneResidual> for Residual {
    fn from(r: PlaneResidual) -> Self {
        Residual::Plane(r)
    }
}

impl From<LineResidual> for Residual {
    fn from(r: LineResidual) -> Self {
        Residual::Line(r)
    }
}

/// Per-axis sensitivity ordered `(r_x, r_y, r_z, t_x, t_y, t_z)`. Entries are
/// diagonal elements of a Gram matrix and therefore non-negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityVector(Vec6);

impl SensitivityVector {
    pub fn new(s: Vec6) -> Result<Self> {
        if s.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidInput(format!("sensitivity entries must be >= 0, got {s:?}")));
        }
        Ok(Self(s))
    }

    pub fn values(&self) -> &Vec6 {
        &self.0
    }

    pub fn rotation(&self) -> Vec3 {
        self.0.fixed_rows::<3>(0).into_owned()
    }

    pub fn translation(&self) -> Vec3 {
        self.0.fixed_rows::<3>(3).into_owned()
    }
}

/// Signed distance `(R p + t - q) . n`.
pub fn plane_error(res: &PlaneResidual, pose: &RigidPose) -> f64 {
    (pose.transform(&res.p) - res.q).dot(&res.n)
}

/// `[(p x n)^T  n^T]`.
pub fn plane_jacobian(res: &PlaneResidual) -> Vec6 {
    let rot = res.p.cross(&res.n);
    Vec6::new(rot.x, rot.y, rot.z, res.n.x, res.n.y, res.n.z)
}

/// `d = (q - R p - t) x n`; its norm is the point-to-line distance.
///
/// This is the parallelogram form `(q - x) x (q + n - x)` with
/// `x = R p + t`, which reduces exactly to `(q - x) x n`.
pub fn line_distance_vector(res: &LineResidual, pose: &RigidPose) -> Vec3 {
    (res.q - pose.transform(&res.p)).cross(&res.n)
}

/// `[(n . p) I - p n^T   n^]`, 3x6.
pub fn line_jacobian(res: &LineResidual) -> Matrix3x6<f64> {
    let rot = Mat3::identity() * res.n.dot(&res.p) - res.p * res.n.transpose();
    let mut j = Matrix3x6::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot);
    j.fixed_view_mut::<3, 3>(0, 3).copy_from(&skew(&res.n));
    j
}

/// Gauss-Newton Hessian `J^T J` of the squared line distance.
pub fn line_hessian(res: &LineResidual) -> Matrix6<f64> {
    let j = line_jacobian(res);
    j.transpose() * j
}

/// Six-axis sensitivity.
///
/// Lines use the diagonal of `H = J^T J`, which equals the eigenvalue-weighted
/// axis projections `sum_k lambda_k v_kj^2`. Planes use the squared Jacobian
/// entries, the same quantity for a rank-one `H`.
pub fn axis_sensitivity(res: &Residual) -> SensitivityVector {
    match res {
        Residual::Plane(r) => SensitivityVector(plane_jacobian(r).map(|v| v * v)),
        Residual::Line(r) => {
            let j = line_jacobian(r);
            SensitivityVector(Vec6::from_fn(|c, _| j.column(c).norm_squared()))
        }
    }
}
