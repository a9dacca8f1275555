//! Gauss-Newton pose refinement over fixed plane and line correspondences.

use nalgebra::{Matrix6, SymmetricEigen, Vector6};

use crate::registration::RigidPose;
use crate::residual::{line_distance_vector, line_jacobian, plane_error, plane_jacobian, Residual};
use crate::so3::{exp_so3, RotVec};
use crate::{Error, Result, Vec3};

pub const DEFAULT_ITERATIONS: usize = 10;
pub const STEP_TOL: f64 = 1e-10;
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSolution {
    pub pose: RigidPose,
    pub iterations: usize,
    /// Norm of the last increment applied.
    pub last_step: f64,
}

/// Normal equations `(J^T J, J^T e)` with every residual linearised at its
/// point transformed by `pose`.
pub fn normal_equations(residuals: &[Residual], pose: &RigidPose) -> (Matrix6<f64>, Vector6<f64>) {
    let mut h = Matrix6::zeros();
    let mut g = Vector6::zeros();
    let ident = RigidPose::identity();
    for res in residuals {
        let moved = res.with_point(pose.transform(res.point()));
        match &moved {
            Residual::Plane(r) => {
                let j = plane_jacobian(r);
                h += j * j.transpose();
                g += j * plane_error(r, &ident);
            }
            Residual::Line(r) => {
                let j = line_jacobian(r);
                h += j.transpose() * j;
                g += j.transpose() * line_distance_vector(r, &ident);
            }
        }
    }
    (h, g)
}

fn condition(h: &Matrix6<f64>) -> f64 {
    let eig = SymmetricEigen::new(*h).eigenvalues;
    let hi = eig.max();
    let lo = eig.min();
    if lo <= 0.0 || hi <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Refines `init` for at most `iters` steps, stopping early once a step is
/// shorter than [`STEP_TOL`]. The increment is applied on the left:
/// `R <- exp(dr) R`, `t <- exp(dr) t + dt`.
pub fn solve_pose_detailed(residuals: &[Residual], init: &RigidPose, iters: usize) -> Result<PoseSolution> {
    if residuals.len() < 4 {
        return Err(Error::InvalidInput(format!("need at least 4 residuals, got {}", residuals.len())));
    }
    let mut pose = *init;
    let mut last_step = f64::INFINITY;
    let mut done = 0;
    for _ in 0..iters {
        let (h, g) = normal_equations(residuals, &pose);
        let cond = condition(&h);
        if !(cond <= MAX_CONDITION) {
            return Err(Error::RankDeficientSystem { condition: cond });
        }
        let step = h
            .cholesky()
            .ok_or(Error::RankDeficientSystem { condition: cond })?
            .solve(&(-g));
        let dr = exp_so3(&RotVec::new(Vec3::new(step[0], step[1], step[2])));
        pose = RigidPose::new(dr * pose.r, &dr * pose.t + Vec3::new(step[3], step[4], step[5]));
        last_step = step.norm();
        done += 1;
        if last_step < STEP_TOL {
            break;
        }
    }
    Ok(PoseSolution { pose, iterations: done, last_step })
}

pub fn solve_pose(residuals: &[Residual], init: &RigidPose, iters: usize) -> Result<RigidPose> {
    solve_pose_detailed(residuals, init, iters).map(|s| s.pose)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::residual::{LineResidual, PlaneResidual};
    use crate::simulator::scene::{generate_scene, random_pose, SceneConfig};
    use crate::so3::riem_distance;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scene_residuals(seed: u64) -> (Vec<Residual>, RigidPose) {
        let cfg = SceneConfig { ring_count: 4, azimuth_step: 6.0_f64.to_radians(), ..SceneConfig::default() };
        let scene = generate_scene(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        (scene.residuals(), scene.t_gt)
    }

    #[test]
    fn ground_truth_is_a_fixed_point() {
        let (res, gt) = scene_residuals(1);
        let sol = solve_pose_detailed(&res, &gt, DEFAULT_ITERATIONS).unwrap();
        assert!(sol.last_step < 1e-12);
        assert_eq!(sol.iterations, 1);
    }

    #[test]
    fn recovers_ground_truth_from_identity() {
        for seed in 0..10 {
            let (res, gt) = scene_residuals(seed);
            let pose = solve_pose(&res, &RigidPose::identity(), DEFAULT_ITERATIONS).unwrap();
            assert!((pose.t - gt.t).norm() < 1e-8);
            assert!(riem_distance(&pose.r, &gt.r).unwrap().sqrt() < 1e-8);
        }
    }

    #[test]
    fn larger_offsets_still_converge() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (res, _) = scene_residuals(2);
        // Re-target the same residual geometry at a new pose.
        let gt = random_pose(0.3, 2.0, &mut rng);
        let moved: Vec<Residual> = res
            .iter()
            .map(|r| match *r {
                Residual::Plane(p) => Residual::Plane(PlaneResidual { q: gt.transform(&p.p), n: &gt.r * p.n, ..p }),
                Residual::Line(l) => Residual::Line(LineResidual { q: gt.transform(&l.p), n: &gt.r * l.n, ..l }),
            })
            .collect();
        let pose = solve_pose(&moved, &RigidPose::identity(), 20).unwrap();
        assert!((pose.t - gt.t).norm() < 1e-8);
    }

    #[test]
    fn single_plane_is_rank_deficient() {
        let res: Vec<Residual> = (0..20)
            .map(|i| {
                let p = Vec3::new(i as f64, (i * i % 7) as f64, 3.0);
                Residual::Plane(PlaneResidual::new(p, Vec3::new(0.0, 0.0, 3.0), Vec3::z()).unwrap())
            })
            .collect();
        assert!(matches!(
            solve_pose(&res, &RigidPose::identity(), DEFAULT_ITERATIONS),
            Err(Error::RankDeficientSystem { .. })
        ));
    }

    #[test]
    fn too_few_residuals() {
        let (res, _) = scene_residuals(3);
        assert!(solve_pose(&res[..3], &RigidPose::identity(), 5).is_err());
    }
}
