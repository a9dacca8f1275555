//! Runtime self-checks grouped into suites, each reporting a measured value
//! against its tolerance.

use std::fmt;

use nalgebra::Vector5;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::registration::{check_rotation_under_disturbance, solve_rigid, PointPairSet, RigidPose};
use crate::residual::{line_distance_vector, line_jacobian, plane_error, plane_jacobian, LineResidual, PlaneResidual};
use crate::so3::{
    exp_so3, log_so3, mc_ring_stats, random_unit, riem_distance, riem_terms, sample_disk_disturbance, RotVec, Rotation,
};
use crate::uncertainty::{
    beam_covariance, beam_jacobian, beam_rotation, pattern_ellipsoid, BeamModel, Ellipsoid3, LaserSample,
};
use crate::{Error, Mat3, Result, Vec3, Vec6};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    So3,
    Registration,
    Jacobians,
    Uncertainty,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::So3, Suite::Registration, Suite::Jacobians, Suite::Uncertainty];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::So3 => "so3",
            Suite::Registration => "registration",
            Suite::Jacobians => "jacobians",
            Suite::Uncertainty => "uncertainty",
        }
    }

    /// Suites named by `s`; `all` expands to every suite.
    pub fn parse_selection(s: &str) -> Result<Vec<Suite>> {
        match s {
            "all" => Ok(Self::ALL.to_vec()),
            other => Self::ALL
                .iter()
                .find(|suite| suite.name() == other)
                .map(|suite| vec![*suite])
                .ok_or_else(|| Error::InvalidInput(format!("unknown suite '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub suite: Suite,
    pub name: &'static str,
    pub measured: f64,
    /// Human-readable acceptance condition.
    pub condition: String,
    pub passed: bool,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}/{}: measured {:.6e}, need {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.suite.name(),
            self.name,
            self.measured,
            self.condition
        )
    }
}

fn at_most(suite: Suite, name: &'static str, measured: f64, limit: f64) -> CheckResult {
    CheckResult { suite, name, measured, condition: format!("<= {limit:e}"), passed: measured <= limit }
}

fn at_least(suite: Suite, name: &'static str, measured: f64, limit: f64) -> CheckResult {
    CheckResult { suite, name, measured, condition: format!(">= {limit:e}"), passed: measured >= limit }
}

fn failed(suite: Suite, name: &'static str, err: Error) -> CheckResult {
    CheckResult { suite, name, measured: f64::NAN, condition: format!("no error ({err})"), passed: false }
}

fn random_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vec3 {
    Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale
}

fn small_rotation(rng: &mut ChaCha8Rng, max_angle: f64) -> Rotation {
    exp_so3(&RotVec::from_axis_angle(&random_unit(rng), rng.gen_range(0.0..max_angle)))
}

pub fn run_suite(suite: Suite, seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (suite as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    match suite {
        Suite::So3 => so3_checks(&mut rng),
        Suite::Registration => registration_checks(&mut rng),
        Suite::Jacobians => jacobian_checks(&mut rng),
        Suite::Uncertainty => uncertainty_checks(&mut rng),
    }
}

pub fn run_suites(suites: &[Suite], seed: u64) -> Vec<CheckResult> {
    suites.iter().flat_map(|s| run_suite(*s, seed)).collect()
}

fn so3_checks(rng: &mut ChaCha8Rng) -> Vec<CheckResult> {
    let s = Suite::So3;
    let mut out = Vec::new();

    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let phi = RotVec::from_axis_angle(&random_unit(rng), rng.gen_range(0.0..3.1));
        match log_so3(&exp_so3(&phi)) {
            Ok(back) => worst = worst.max((back.vector() - phi.vector()).norm()),
            Err(e) => return vec![failed(s, "log_exp_round_trip", e)],
        }
    }
    out.push(at_most(s, "log_exp_round_trip", worst, 1e-9));

    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let r1 = Rotation::random(rng);
        let theta = rng.gen_range(0.0..3.0);
        let r2 = r1 * exp_so3(&RotVec::from_axis_angle(&random_unit(rng), theta));
        let d = riem_distance(&r1, &r2).unwrap_or(f64::NAN);
        worst = worst.max((d - 2.0 * theta * theta).abs() / (2.0 * theta * theta).max(1e-300));
    }
    out.push(at_most(s, "riem_equals_two_theta_squared", worst, 1e-9));

    // Second-order expansion at small angles.
    let expansion_error = |rng: &mut ChaCha8Rng, theta: f64| -> (f64, f64) {
        let r_star = Rotation::random(rng);
        let axis_k = random_unit(rng);
        let axis_l = random_unit(rng);
        let err = |t: f64| {
            let phi_k = RotVec::from_axis_angle(&axis_k, t);
            let phi_l = RotVec::from_axis_angle(&axis_l, t);
            let exact = riem_distance(&r_star, &(exp_so3(&phi_k) * r_star * exp_so3(&phi_l).transpose())).unwrap();
            let approx = riem_terms(&r_star, &phi_k, &phi_l).sum();
            ((exact - approx).abs(), exact)
        };
        let (e1, exact) = err(theta);
        let (e2, _) = err(theta / 2.0);
        (e1 / exact, e1 / e2)
    };
    let mut worst_rel: f64 = 0.0;
    let mut ratio_sum = 0.0;
    for _ in 0..100 {
        worst_rel = worst_rel.max(expansion_error(rng, 1e-3).0);
        // Measured where the quartic remainder dominates rounding.
        ratio_sum += expansion_error(rng, 0.05).1;
    }
    out.push(at_most(s, "expansion_relative_error", worst_rel, 1e-4));
    out.push(at_least(s, "expansion_halving_ratio", ratio_sum / 100.0, 3.5));

    let (tk, tl) = (rng.gen_range(0.01..0.1), rng.gen_range(0.01..0.1));
    let stats = mc_ring_stats(tk, tl, 100_000, rng.gen());
    let expected = 2.0 * tk * tk + 2.0 * tl * tl + tk * tk * tl * tl / 4.0;
    out.push(at_most(s, "ring_expectation_sigmas", (stats.riem.mean - expected).abs() / stats.riem.stderr, 3.0));
    out.push(at_most(s, "ring_d_term_sigmas", stats.d_term.mean.abs() / stats.d_term.stderr, 3.0));
    let c_expected = tk * tk * tl * tl / 4.0;
    out.push(at_most(s, "ring_c_term_sigmas", (stats.c_term.mean - c_expected).abs() / stats.c_term.stderr, 3.0));

    let eps = 0.1;
    let p = random_unit(rng) * 5.0;
    let pn = p.normalize();
    let n = 200_000;
    let mut sum = 0.0;
    for _ in 0..n {
        let moved = sample_disk_disturbance(eps, &p, rng).map(|r| r.apply(&p)).unwrap_or(p);
        sum += (moved - pn * pn.dot(&moved)).norm_squared();
    }
    let rel = (sum / n as f64) / (eps * eps / 2.0) - 1.0;
    out.push(at_most(s, "disk_second_moment_rel_error", rel.abs(), 0.01));
    out
}

fn registration_checks(rng: &mut ChaCha8Rng) -> Vec<CheckResult> {
    let s = Suite::Registration;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let r_star = Rotation::random(rng);
        let src: Vec<Vec3> = (0..10).map(|_| random_vec(rng, 10.0)).collect();
        let tgt: Vec<Vec3> = src.iter().map(|p| r_star.apply(p)).collect();
        let pairs = PointPairSet::new(src, tgt).expect("ten pairs");
        let (l, k) = (small_rotation(rng, 0.3), small_rotation(rng, 0.3));
        match check_rotation_under_disturbance(&r_star, &l, &k, &pairs) {
            Ok(d) => worst = worst.max(d),
            Err(e) => return vec![failed(s, "common_disturbance_composes", e)],
        }
    }
    let mut out = vec![at_most(s, "common_disturbance_composes", worst, 1e-9)];

    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let gt = RigidPose::new(Rotation::random(rng), random_vec(rng, 5.0));
        let src: Vec<Vec3> = (0..8).map(|_| random_vec(rng, 10.0)).collect();
        let tgt: Vec<Vec3> = src.iter().map(|p| gt.transform(p)).collect();
        match solve_rigid(&PointPairSet::new(src, tgt).expect("eight pairs")) {
            Ok(est) => worst = worst.max((est.r.matrix() - gt.r.matrix()).norm() + (est.t - gt.t).norm()),
            Err(e) => return vec![failed(s, "rigid_recovery", e)],
        }
    }
    out.push(at_most(s, "rigid_recovery", worst, 1e-9));
    out
}

fn jacobian_checks(rng: &mut ChaCha8Rng) -> Vec<CheckResult> {
    let s = Suite::Jacobians;
    let step = 1e-6;
    let pose_of = |x: &Vec6| {
        RigidPose::new(exp_so3(&RotVec::new(Vec3::new(x[0], x[1], x[2]))), Vec3::new(x[3], x[4], x[5]))
    };
    let (mut plane_worst, mut line_worst, mut beam_worst): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..100 {
        let (p, q, n) = (random_vec(rng, 20.0), random_vec(rng, 20.0), random_unit(rng));
        let plane = PlaneResidual::new(p, q, n).expect("unit normal");
        let line = LineResidual::new(p, q, n).expect("unit direction");
        let jp = plane_jacobian(&plane);
        let jl = line_jacobian(&line);
        for c in 0..6 {
            let mut dx = Vec6::zeros();
            dx[c] = step;
            let (fwd, bwd) = (pose_of(&dx), pose_of(&(-dx)));
            let fd = (plane_error(&plane, &fwd) - plane_error(&plane, &bwd)) / (2.0 * step);
            plane_worst = plane_worst.max((fd - jp[c]).abs() / jp.amax().max(1.0));
            let fd = (line_distance_vector(&line, &fwd) - line_distance_vector(&line, &bwd)) / (2.0 * step);
            line_worst = line_worst.max((fd - jl.column(c)).amax() / jl.amax().max(1.0));
        }

        let sample = LaserSample::new(rng.gen_range(-3.1..3.1), rng.gen_range(-0.5..0.5), rng.gen_range(1.0..100.0))
            .expect("positive depth");
        let local = Vec3::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), sample.depth);
        let jb = beam_jacobian(&sample, &local);
        let x0 = Vector5::new(local.x, local.y, local.z, sample.alpha, sample.omega);
        let f = |x: &Vector5<f64>| beam_rotation(x[3], x[4]) * Vec3::new(x[0], x[1], x[2]);
        for c in 0..5 {
            let mut h = Vector5::zeros();
            h[c] = 1e-7;
            let fd = (f(&(x0 + h)) - f(&(x0 - h))) / 2e-7;
            beam_worst = beam_worst.max((fd - jb.column(c)).norm() / jb.column(c).norm().max(1.0));
        }
    }
    vec![
        at_most(s, "plane_jacobian_fd", plane_worst, 1e-5),
        at_most(s, "line_jacobian_fd", line_worst, 1e-5),
        at_most(s, "beam_jacobian_fd", beam_worst, 1e-5),
    ]
}

fn uncertainty_checks(rng: &mut ChaCha8Rng) -> Vec<CheckResult> {
    let s = Suite::Uncertainty;
    let b = BeamModel::vlp16();
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let sample = LaserSample::new(rng.gen_range(-3.1..3.1), rng.gen_range(-0.4..0.1), rng.gen_range(1.0..100.0))
            .expect("positive depth");
        let half = b.sigmas(sample.depth) * 3.0_f64.sqrt();
        let n = 100_000;
        let (mut sum, mut outer) = (Vec3::zeros(), Mat3::zeros());
        for _ in 0..n {
            let d = Vector5::from_fn(|i, _| if half[i] > 0.0 { rng.gen_range(-half[i]..half[i]) } else { 0.0 });
            let p = beam_rotation(sample.alpha + d[3], sample.omega + d[4]) * Vec3::new(d[0], d[1], sample.depth + d[2]);
            sum += p;
            outer += p * p.transpose();
        }
        let mean = sum / n as f64;
        let emp = outer / n as f64 - mean * mean.transpose();
        let cov = beam_covariance(&b, &sample).cov;
        worst = worst.max((emp - cov).norm() / cov.norm());
    }
    let mut out = vec![at_most(s, "beam_covariance_sampled_rel_error", worst, 0.05)];

    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let sigma2 = 10f64.powf(rng.gen_range(-6.0..-2.0));
        let nbrs: Vec<Ellipsoid3> = (0..5)
            .map(|_| Ellipsoid3::from_parts(Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0), Mat3::identity() * sigma2))
            .collect();
        let l0 = pattern_ellipsoid(&nbrs).map(|e| e.eigenvalues()[0]).unwrap_or(f64::NAN);
        worst = worst.max((l0 / sigma2).ln().abs());
    }
    out.push(at_most(s, "plane_thickness_log_ratio", worst, 2f64.ln()));
    out
}
