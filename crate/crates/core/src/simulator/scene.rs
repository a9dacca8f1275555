//! Synthetic ring-scanner scenes with a plane or line model per point.

use std::f64::consts::PI;

use rand::Rng;

use crate::registration::RigidPose;
use crate::residual::{LineResidual, PlaneResidual, Residual, ResidualKind};
use crate::so3::{disk_displace, exp_so3, random_unit, RotVec};
use crate::uncertainty::LaserSample;
use crate::linalg::orthonormal_complement;
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneConfig {
    pub ring_count: usize,
    pub depth_min: f64,
    pub depth_max: f64,
    /// Azimuth increment between consecutive returns of a ring (radians).
    pub azimuth_step: f64,
    /// Lowest and highest ring elevation (radians).
    pub elevation_min: f64,
    pub elevation_max: f64,
    /// Probability that a point is assigned a plane rather than a line.
    pub plane_fraction: f64,
    /// Bounds on the ground-truth rotation angle (radians) and translation
    /// norm (metres).
    pub pose_rot_max: f64,
    pub pose_trans_max: f64,
    /// Distance of model anchors from their point.
    pub anchor_spread: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            ring_count: 64,
            depth_min: 1.0,
            depth_max: 100.0,
            azimuth_step: 0.2_f64.to_radians(),
            elevation_min: (-24.8_f64).to_radians(),
            elevation_max: 2.0_f64.to_radians(),
            plane_fraction: 0.5,
            pose_rot_max: 0.087,
            pose_trans_max: 0.5,
            anchor_spread: 0.2,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidInput(msg.to_string()));
        if self.ring_count == 0 {
            return bad("ring_count must be at least 1");
        }
        if !(self.depth_min > 0.0 && self.depth_min < self.depth_max && self.depth_max.is_finite()) {
            return bad("need 0 < depth_min < depth_max");
        }
        if !(self.azimuth_step > 0.0 && self.azimuth_step <= 2.0 * PI) {
            return bad("azimuth_step must lie in (0, 2 pi]");
        }
        if !(self.elevation_min <= self.elevation_max
            && self.elevation_min > -PI / 2.0
            && self.elevation_max < PI / 2.0)
        {
            return bad("elevations must satisfy -pi/2 < min <= max < pi/2");
        }
        if !(0.0..=1.0).contains(&self.plane_fraction) {
            return bad("plane_fraction must lie in [0, 1]");
        }
        if !(self.pose_rot_max >= 0.0 && self.pose_rot_max < PI && self.pose_trans_max >= 0.0) {
            return bad("pose bounds must be non-negative and the rotation below pi");
        }
        if !(self.anchor_spread > 0.0 && self.anchor_spread.is_finite()) {
            return bad("anchor_spread must be positive");
        }
        Ok(())
    }

    pub fn azimuth_count(&self) -> usize {
        (2.0 * PI / self.azimuth_step + 1e-9).floor() as usize
    }

    pub fn point_count(&self) -> usize {
        self.ring_count * self.azimuth_count()
    }

    pub fn ring_elevation(&self, ring: usize) -> f64 {
        let span = self.elevation_max - self.elevation_min;
        self.elevation_min + span * (ring as f64 + 0.5) / self.ring_count as f64
    }
}

/// Anchor points defining a plane (three) or a line (two).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Model {
    Plane([Vec3; 3]),
    Line([Vec3; 2]),
}

impl Model {
    pub fn kind(&self) -> ResidualKind {
        match self {
            Model::Plane(_) => ResidualKind::Plane,
            Model::Line(_) => ResidualKind::Line,
        }
    }

    pub fn anchors(&self) -> &[Vec3] {
        match self {
            Model::Plane(a) => a,
            Model::Line(a) => a,
        }
    }

    pub fn anchors_mut(&mut self) -> &mut [Vec3] {
        match self {
            Model::Plane(a) => a,
            Model::Line(a) => a,
        }
    }

    pub fn transformed(&self, pose: &RigidPose) -> Model {
        match self {
            Model::Plane(a) => Model::Plane(a.map(|p| pose.transform(&p))),
            Model::Line(a) => Model::Line(a.map(|p| pose.transform(&p))),
        }
    }

    /// Residual of measurement `p` against this model.
    pub fn residual(&self, p: Vec3) -> Residual {
        match self {
            Model::Plane([a, b, c]) => {
                let n = (b - a).cross(&(c - a)).normalize();
                Residual::Plane(PlaneResidual { p, q: *a, n })
            }
            Model::Line([a, b]) => Residual::Line(LineResidual { p, q: *a, n: (b - a).normalize() }),
        }
    }

    /// Distance from `x` to the plane or line.
    pub fn distance(&self, x: &Vec3) -> f64 {
        match self.residual(*x) {
            Residual::Plane(r) => (r.p - r.q).dot(&r.n).abs(),
            Residual::Line(r) => (r.p - r.q).cross(&r.n).norm(),
        }
    }
}

/// Source measurements, their target-frame models and the pose mapping the
/// source frame onto the target frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub samples: Vec<LaserSample>,
    pub points: Vec<Vec3>,
    /// Models in the source frame, as generated.
    pub source_models: Vec<Model>,
    /// Models in the target frame, `t_gt` applied to `source_models` unless
    /// disturbed.
    pub models: Vec<Model>,
    pub t_gt: RigidPose,
}

impl Scene {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Same source data observed from a target frame at `t_gt`.
    pub fn with_pose(&self, t_gt: RigidPose) -> Scene {
        Scene {
            samples: self.samples.clone(),
            points: self.points.clone(),
            source_models: self.source_models.clone(),
            models: self.source_models.iter().map(|m| m.transformed(&t_gt)).collect(),
            t_gt,
        }
    }

    pub fn residuals(&self) -> Vec<Residual> {
        self.points.iter().zip(&self.models).map(|(p, m)| m.residual(*p)).collect()
    }
}

/// Random rigid pose with angle uniform in `[0, rot_max]` about a uniform
/// axis and translation uniform in the ball of radius `trans_max`.
pub fn random_pose<R: Rng + ?Sized>(rot_max: f64, trans_max: f64, rng: &mut R) -> RigidPose {
    let axis = random_unit(rng);
    let angle = rng.gen_range(0.0..=rot_max);
    let dir = random_unit(rng);
    let radius = trans_max * rng.gen::<f64>().cbrt();
    RigidPose::new(exp_so3(&RotVec::from_axis_angle(&axis, angle)), dir * radius)
}

/// Rings of returns at evenly spaced elevations, uniform random depths, and a
/// random plane or line through every return.
///
/// Plane anchors sit on a circle of radius `anchor_spread` around the point
/// at 120 degree spacing, so the point is their centroid. Line anchors sit at
/// `+-anchor_spread` along the line direction.
pub fn generate_scene<R: Rng + ?Sized>(cfg: &SceneConfig, rng: &mut R) -> Result<Scene> {
    cfg.validate()?;
    let n = cfg.point_count();
    let mut samples = Vec::with_capacity(n);
    let mut points = Vec::with_capacity(n);
    let mut source_models = Vec::with_capacity(n);
    for ring in 0..cfg.ring_count {
        let omega = cfg.ring_elevation(ring);
        for k in 0..cfg.azimuth_count() {
            let alpha = k as f64 * cfg.azimuth_step;
            let depth = rng.gen_range(cfg.depth_min..=cfg.depth_max);
            let s = LaserSample::new(alpha, omega, depth)?;
            let p = s.point();
            let d = random_unit(rng);
            let model = if rng.gen_bool(cfg.plane_fraction) {
                let (u, v) = orthonormal_complement(&d);
                let phase = rng.gen_range(0.0..2.0 * PI);
                Model::Plane(std::array::from_fn(|i| {
                    let a = phase + i as f64 * 2.0 * PI / 3.0;
                    p + (u * a.cos() + v * a.sin()) * cfg.anchor_spread
                }))
            } else {
                Model::Line([p - d * cfg.anchor_spread, p + d * cfg.anchor_spread])
            };
            samples.push(s);
            points.push(p);
            source_models.push(model);
        }
    }
    let t_gt = random_pose(cfg.pose_rot_max, cfg.pose_trans_max, rng);
    let models = source_models.iter().map(|m| m.transformed(&t_gt)).collect();
    Ok(Scene { samples, points, source_models, models, t_gt })
}

/// What a disturbance displaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DisturbanceMode {
    /// Source measurements.
    Measurements,
    /// Target model anchors.
    Models,
}

impl DisturbanceMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            DisturbanceMode::Measurements => "measurements",
            DisturbanceMode::Models => "models",
        }
    }
}

impl std::str::FromStr for DisturbanceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "measurements" => Ok(DisturbanceMode::Measurements),
            "models" => Ok(DisturbanceMode::Models),
            other => Err(Error::InvalidInput(format!("unknown disturbance mode '{other}'"))),
        }
    }
}

fn check_amplitude(da: f64) -> Result<()> {
    if !(0.0..1.0).contains(&da) {
        return Err(Error::InvalidInput(format!("disturbance amplitude must lie in [0, 1), got {da}")));
    }
    Ok(())
}

/// Moves each point along the sphere through it by a disk-uniform offset of
/// radius `da * |p|`.
pub fn perturb_points<R: Rng + ?Sized>(points: &mut [Vec3], da: f64, rng: &mut R) -> Result<()> {
    check_amplitude(da)?;
    if da > 0.0 {
        for p in points {
            *p = disk_displace(da * p.norm(), p, rng)?;
        }
    }
    Ok(())
}

/// [`perturb_points`] applied to every model anchor.
pub fn perturb_models<R: Rng + ?Sized>(models: &mut [Model], da: f64, rng: &mut R) -> Result<()> {
    check_amplitude(da)?;
    if da > 0.0 {
        for m in models {
            perturb_points(m.anchors_mut(), da, rng)?;
        }
    }
    Ok(())
}

/// Disturbs the measurements or the target models of `scene`. `da = 0`
/// returns an unchanged copy.
pub fn perturb_scene<R: Rng + ?Sized>(scene: &Scene, da: f64, mode: DisturbanceMode, rng: &mut R) -> Result<Scene> {
    let mut out = scene.clone();
    match mode {
        DisturbanceMode::Measurements => perturb_points(&mut out.points, da, rng)?,
        DisturbanceMode::Models => perturb_models(&mut out.models, da, rng)?,
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> SceneConfig {
        SceneConfig { ring_count: 8, azimuth_step: 2.0_f64.to_radians(), ..SceneConfig::default() }
    }

    #[test]
    fn minimal_scene() {
        let cfg = SceneConfig { ring_count: 1, azimuth_step: PI / 2.0, ..SceneConfig::default() };
        let scene = generate_scene(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(scene.len(), 4);
        assert!(scene.models.iter().all(|m| m.anchors().len() >= 2));
    }

    #[test]
    fn point_count_follows_rings_and_azimuths() {
        assert_eq!(SceneConfig::default().point_count(), 64 * 1800);
        let cfg = small_cfg();
        let scene = generate_scene(&cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(scene.len(), 8 * 180);
        for (step, expect) in [(PI / 3.0, 6), (1.0, 6), (2.0 * PI, 1)] {
            let c = SceneConfig { azimuth_step: step, ..cfg };
            assert_eq!(c.azimuth_count(), expect);
        }
    }

    #[test]
    fn points_lie_on_their_models() {
        let scene = generate_scene(&small_cfg(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        for ((p, src), tgt) in scene.points.iter().zip(&scene.source_models).zip(&scene.models) {
            assert!(src.distance(p) <= 1e-12);
            assert!(tgt.distance(&scene.t_gt.transform(p)) <= 1e-12);
        }
    }

    #[test]
    fn anchors_are_well_formed() {
        let scene = generate_scene(&small_cfg(), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        for m in &scene.source_models {
            match m {
                Model::Plane([a, b, c]) => assert!((b - a).cross(&(c - a)).norm() > 0.05),
                Model::Line([a, b]) => assert!((b - a).norm() > 0.39),
            }
        }
        let planes = scene.source_models.iter().filter(|m| m.kind() == ResidualKind::Plane).count();
        let frac = planes as f64 / scene.len() as f64;
        assert!((frac - 0.5).abs() < 0.05);
    }

    #[test]
    fn depths_and_elevations_respect_the_config() {
        let cfg = small_cfg();
        let scene = generate_scene(&cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        for s in &scene.samples {
            assert!(s.depth >= cfg.depth_min && s.depth <= cfg.depth_max);
            assert!(s.omega > cfg.elevation_min && s.omega < cfg.elevation_max);
        }
        assert!((cfg.ring_elevation(1) - cfg.ring_elevation(0) - (cfg.elevation_max - cfg.elevation_min) / 8.0).abs() < 1e-15);
    }

    #[test]
    fn ground_truth_respects_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..500 {
            let pose = random_pose(0.087, 0.5, &mut rng);
            assert!(pose.r.log().unwrap().angle() <= 0.087 + 1e-12);
            assert!(pose.t.norm() <= 0.5);
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let bad = [
            SceneConfig { depth_min: 0.0, ..SceneConfig::default() },
            SceneConfig { depth_min: 5.0, depth_max: 4.0, ..SceneConfig::default() },
            SceneConfig { plane_fraction: 1.5, ..SceneConfig::default() },
            SceneConfig { ring_count: 0, ..SceneConfig::default() },
            SceneConfig { azimuth_step: 0.0, ..SceneConfig::default() },
        ];
        for cfg in bad {
            assert!(generate_scene(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        }
    }

    #[test]
    fn zero_amplitude_is_identity() {
        let scene = generate_scene(&small_cfg(), &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        for mode in [DisturbanceMode::Measurements, DisturbanceMode::Models] {
            let out = perturb_scene(&scene, 0.0, mode, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
            assert_eq!(out, scene);
        }
    }

    #[test]
    fn modes_are_isolated() {
        let scene = generate_scene(&small_cfg(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let m = perturb_scene(&scene, 0.05, DisturbanceMode::Measurements, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(m.models, scene.models);
        assert!(m.points.iter().zip(&scene.points).all(|(a, b)| a != b));
        let o = perturb_scene(&scene, 0.05, DisturbanceMode::Models, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(o.points, scene.points);
        assert_ne!(o.models, scene.models);
    }

    #[test]
    fn disturbance_preserves_range_and_bounds_offset() {
        let scene = generate_scene(&small_cfg(), &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
        let da = 0.1;
        let out = perturb_scene(&scene, da, DisturbanceMode::Measurements, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        for (a, b) in out.points.iter().zip(&scene.points) {
            assert!((a.norm() - b.norm()).abs() < 1e-9 * b.norm());
            // Tangential offset is at most da |p|.
            let tangential = (a - b) - b * (b.dot(&(a - b)) / b.norm_squared());
            assert!(tangential.norm() <= da * b.norm() * (1.0 + 1e-9));
        }
    }

    #[test]
    fn displacement_grows_with_amplitude() {
        let scene = generate_scene(&small_cfg(), &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let mut last = 0.0;
        for i in 0..20 {
            let da = i as f64 / 100.0;
            let out = perturb_scene(&scene, da, DisturbanceMode::Measurements, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
            let mean = out.points.iter().zip(&scene.points).map(|(a, b)| (a - b).norm()).sum::<f64>() / scene.len() as f64;
            assert!(mean > last || (i == 0 && mean == 0.0));
            last = mean;
        }
    }

    #[test]
    fn rejects_amplitude_outside_unit_interval() {
        let scene = generate_scene(&small_cfg(), &mut ChaCha8Rng::seed_from_u64(12)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(perturb_scene(&scene, -0.1, DisturbanceMode::Models, &mut rng).is_err());
        assert!(perturb_scene(&scene, 1.0, DisturbanceMode::Models, &mut rng).is_err());
    }
}
