//! Small fixed-size helpers that nalgebra does not provide directly.

use nalgebra::SymmetricEigen;

use crate::{Mat3, Vec3};

/// Two unit vectors completing `v` to a right-handed orthonormal frame.
/// `v` must be non-zero.
pub fn orthonormal_complement(v: &Vec3) -> (Vec3, Vec3) {
    let n = v.normalize();
    // Cross with the canonical axis least aligned with n.
    let a = n.abs();
    let helper = if a.x <= a.y && a.x <= a.z {
        Vec3::x()
    } else if a.y <= a.z {
        Vec3::y()
    } else {
        Vec3::z()
    };
    let e1 = n.cross(&helper).normalize();
    let e2 = n.cross(&e1);
    (e1, e2)
}

/// Eigen-decomposition of a symmetric 3x3 matrix with eigenvalues sorted
/// ascending. Column `k` of the returned matrix is the eigenvector for
/// eigenvalue `k`.
pub fn sym3_eigen_sorted(m: &Mat3) -> (Vec3, Mat3) {
    let eig = SymmetricEigen::new(*m);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = Vec3::new(
        eig.eigenvalues[order[0]],
        eig.eigenvalues[order[1]],
        eig.eigenvalues[order[2]],
    );
    let vectors = Mat3::from_columns(&[
        eig.eigenvectors.column(order[0]).into_owned(),
        eig.eigenvectors.column(order[1]).into_owned(),
        eig.eigenvectors.column(order[2]).into_owned(),
    ]);
    (values, vectors)
}

/// Eigenvalues of a symmetric 3x3 matrix, ascending, via the trigonometric
/// closed form. Accurate to roughly `1e-15 * |m|` in absolute terms.
pub fn sym3_eigenvalues(m: &Mat3) -> Vec3 {
    let p1 = m[(0, 1)].powi(2) + m[(0, 2)].powi(2) + m[(1, 2)].powi(2);
    let q = m.trace() / 3.0;
    let p2 = (m[(0, 0)] - q).powi(2) + (m[(1, 1)] - q).powi(2) + (m[(2, 2)] - q).powi(2) + 2.0 * p1;
    if p2 <= f64::MIN_POSITIVE {
        return Vec3::repeat(q);
    }
    if p1 <= 1e-30 * p2 {
        let mut d = [m[(0, 0)], m[(1, 1)], m[(2, 2)]];
        d.sort_by(f64::total_cmp);
        return Vec3::new(d[0], d[1], d[2]);
    }
    let p = (p2 / 6.0).sqrt();
    let b = (m - Mat3::identity() * q) / p;
    let r = (b.determinant() / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let hi = q + 2.0 * p * phi.cos();
    let lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3).cos();
    let mid = 3.0 * q - hi - lo;
    Vec3::new(lo, mid, hi)
}
