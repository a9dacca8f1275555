//! Selection-versus-random trials and the full factorial sweep.

use std::collections::BTreeSet;
use std::io::Write;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::scene::{generate_scene, perturb_models, perturb_points, random_pose, DisturbanceMode, Model, Scene, SceneConfig};
use super::solve::{solve_pose, DEFAULT_ITERATIONS};
use crate::linalg::sym3_eigenvalues;
use crate::registration::RigidPose;
use crate::residual::{axis_sensitivity, Residual};
use crate::selection::{dimension_maxima, per_dimension_ranking, union_of_heads, ScoredResidual, SelectionParams};
use crate::so3::log_so3;
use crate::uncertainty::{uncertainty_from_eigenvalues, BeamModel, BeamNoise};
use crate::{Error, Mat3, Result, Vec3};

/// Eigenvalues of the pattern ellipsoid formed by a model's anchors, each
/// carrying its beam covariance.
fn model_eigenvalues(noise: &BeamNoise, model: &Model) -> Vec3 {
    let anchors = model.anchors();
    let n = anchors.len() as f64;
    let mean = anchors.iter().sum::<Vec3>() / n;
    let mut cov = Mat3::zeros();
    for a in anchors {
        let d = a - mean;
        cov += d * d.transpose() + noise.covariance_at(a);
    }
    sym3_eigenvalues(&(cov / n)).map(|v| v.max(0.0))
}

/// Scores every residual of `scene` from its source measurement and target
/// model. Ids are positions in the scene.
pub fn score_scene(scene: &Scene, beam: &BeamModel) -> Vec<ScoredResidual> {
    score_observations(&scene.points, &scene.models, beam)
}

/// [`score_scene`] over parallel slices of measurements and models.
pub fn score_observations(points: &[Vec3], models: &[Model], beam: &BeamModel) -> Vec<ScoredResidual> {
    let noise = BeamNoise::new(beam);
    points
        .iter()
        .zip(models)
        .enumerate()
        .map(|(id, (p, model))| {
            let sens = axis_sensitivity(&model.residual(*p));
            let phi = uncertainty_from_eigenvalues(&noise.eigenvalues_at(p), &model_eigenvalues(&noise, model), model.kind());
            let score = sens.values() / (phi * phi);
            ScoredResidual { id, kind: model.kind(), sensitivity: sens, phi, score }
        })
        .collect()
}

/// Exactly `rn` ids chosen by the per-dimension selection.
///
/// `max_per_dim` is the smallest value whose union reaches `rn`; with at most
/// six new ids per step the union then holds fewer than `rn + 6` ids. The
/// surplus is dropped in order of the global key `max_j(score_j / max_j)`. If
/// the ratio stop rule caps the union below `rn`, the remainder is filled
/// from the unselected residuals in the same global order.
pub fn select_budget(scored: &[ScoredResidual], params: &SelectionParams, rn: usize) -> Vec<usize> {
    if rn >= scored.len() {
        return (0..scored.len()).map(|i| scored[i].id).collect::<BTreeSet<_>>().into_iter().collect();
    }
    let ranking = per_dimension_ranking(scored, params.score_ratio_stop, rn);
    let (mut lo, mut hi) = (1, rn);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if union_of_heads(&ranking, mid).len() >= rn {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let chosen = union_of_heads(&ranking, lo);

    let maxima = dimension_maxima(scored);
    let key = |r: &ScoredResidual| {
        (0..6).filter(|&j| maxima[j] > 0.0).map(|j| r.score[j] / maxima[j]).fold(0.0, f64::max)
    };
    let by_key = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    let lookup = |id: usize| match scored.get(id) {
        Some(r) if r.id == id => r,
        _ => scored.iter().find(|r| r.id == id).expect("ranked id comes from the scored list"),
    };

    let mut out: Vec<(f64, usize)> = chosen.iter().map(|&id| (key(lookup(id)), id)).collect();
    out.sort_by(by_key);
    out.truncate(rn);
    if out.len() < rn {
        let mut rest: Vec<(f64, usize)> =
            scored.iter().filter(|r| !chosen.contains(&r.id)).map(|r| (key(r), r.id)).collect();
        let need = rn - out.len();
        if rest.len() > need {
            rest.select_nth_unstable_by(need - 1, by_key);
            rest.truncate(need);
        }
        out.extend(rest);
    }
    let mut ids: Vec<usize> = out.into_iter().map(|(_, id)| id).collect();
    ids.sort_unstable();
    ids
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Selection,
    Random,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Selection => "sel",
            Method::Random => "ran",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseError {
    pub trans_err: f64,
    /// Relative rotation angle (radians).
    pub rot_err: f64,
}

impl PoseError {
    pub fn between(gt: &RigidPose, est: &RigidPose) -> Self {
        let rel = gt.r.transpose() * est.r;
        // Angles near pi are not reachable from a local solver; report pi.
        let rot_err = log_so3(&rel).map(|v| v.angle()).unwrap_or(std::f64::consts::PI);
        Self { trans_err: (gt.t - est.t).norm(), rot_err }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub selection: PoseError,
    pub random: PoseError,
    pub selected_ids: Vec<usize>,
    pub random_ids: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSettings {
    pub beam: BeamModel,
    pub selection: SelectionParams,
    pub mode: DisturbanceMode,
    pub iterations: usize,
}

impl Default for TrialSettings {
    fn default() -> Self {
        Self {
            beam: BeamModel::vlp16(),
            // The budget search sets the per-dimension cap; the prefilter
            // would only shrink the pool it searches.
            selection: SelectionParams { prefilter_ratio: 0.0, ..SelectionParams::default() },
            mode: DisturbanceMode::Measurements,
            iterations: DEFAULT_ITERATIONS,
        }
    }
}

/// One two-frame registration: fresh ground truth, disturbance of amplitude
/// `da`, then `rn` residuals chosen by score and `rn` chosen uniformly, each
/// solved from the identity.
pub fn run_trial(
    template: &Scene,
    cfg: &SceneConfig,
    settings: &TrialSettings,
    da: f64,
    rn: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TrialOutcome> {
    if rn < 6 || rn > template.len() {
        return Err(Error::InvalidInput(format!("budget must lie in [6, {}], got {rn}", template.len())));
    }
    let t_gt = random_pose(cfg.pose_rot_max, cfg.pose_trans_max, rng);
    let mut points = template.points.clone();
    let mut models: Vec<Model> = template.source_models.iter().map(|m| m.transformed(&t_gt)).collect();
    match settings.mode {
        DisturbanceMode::Measurements => perturb_points(&mut points, da, rng)?,
        DisturbanceMode::Models => perturb_models(&mut models, da, rng)?,
    }

    let scored = score_observations(&points, &models, &settings.beam);
    let selected_ids = select_budget(&scored, &settings.selection, rn);
    let mut random_ids = index::sample(rng, points.len(), rn).into_vec();
    random_ids.sort_unstable();

    let solve = |ids: &[usize]| -> Result<PoseError> {
        let subset: Vec<Residual> = ids.iter().map(|&i| models[i].residual(points[i])).collect();
        let est = solve_pose(&subset, &RigidPose::identity(), settings.iterations)?;
        Ok(PoseError::between(&t_gt, &est))
    };
    Ok(TrialOutcome { selection: solve(&selected_ids)?, random: solve(&random_ids)?, selected_ids, random_ids })
}

/// Independent stream per `(seed, da index, rn index, trial)`.
pub fn trial_rng(seed: u64, da_idx: usize, rn_idx: usize, trial: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (i, v) in [seed, da_idx as u64, rn_idx as u64, trial as u64].iter().enumerate() {
        key[i * 8..(i + 1) * 8].copy_from_slice(&v.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub scene: SceneConfig,
    pub trial: TrialSettings,
    pub da_grid: Vec<f64>,
    pub rn_grid: Vec<usize>,
    pub reps: usize,
    /// Worker threads; `None` uses rayon's default.
    pub threads: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            scene: SceneConfig::default(),
            trial: TrialSettings::default(),
            da_grid: (0..20).map(|i| i as f64 / 100.0).collect(),
            rn_grid: vec![120, 180, 240],
            reps: 100,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub da: f64,
    pub rn: usize,
    pub trial: usize,
    pub method: Method,
    pub trans_err: f64,
    pub rot_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialFailure {
    pub da: f64,
    pub rn: usize,
    pub trial: usize,
    pub error: Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub da: f64,
    pub rn: usize,
    pub method: Method,
    pub mean_trans_err: f64,
    pub stderr: f64,
    pub count: usize,
}

/// Rows ordered by `(da, rn, trial, method)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<TrialRow>,
    pub failures: Vec<TrialFailure>,
}

impl SweepResult {
    /// Mean translation error and its standard error per `(da, rn, method)`,
    /// over trials that solved.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut out: Vec<SummaryRow> = Vec::new();
        let mut cells: Vec<((f64, usize, Method), Vec<f64>)> = Vec::new();
        for r in &self.rows {
            let key = (r.da, r.rn, r.method);
            match cells.iter_mut().find(|(k, _)| *k == key) {
                Some((_, v)) => v.push(r.trans_err),
                None => cells.push((key, vec![r.trans_err])),
            }
        }
        cells.sort_by(|a, b| a.0 .0.total_cmp(&b.0 .0).then(a.0 .1.cmp(&b.0 .1)).then(a.0 .2.cmp(&b.0 .2)));
        for ((da, rn, method), v) in cells {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let stderr = if v.len() > 1 {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt()
            } else {
                0.0
            };
            out.push(SummaryRow { da, rn, method, mean_trans_err: mean, stderr, count: v.len() });
        }
        out
    }
}

/// Full factorial sweep over `da_grid x rn_grid x reps`. The scene layout is
/// generated once from `cfg.scene.seed`; every trial draws a fresh ground
/// truth and disturbance from its own stream, so the result does not depend
/// on the thread count.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    if cfg.da_grid.is_empty() || cfg.rn_grid.is_empty() || cfg.reps == 0 {
        return Err(Error::InvalidInput("sweep grids and repetitions must be nonempty".into()));
    }
    let template = generate_scene(&cfg.scene, &mut ChaCha8Rng::seed_from_u64(cfg.scene.seed))?;
    if let Some(&rn) = cfg.rn_grid.iter().find(|&&rn| rn < 6 || rn > template.len()) {
        return Err(Error::InvalidInput(format!("budget {rn} outside [6, {}]", template.len())));
    }
    let jobs: Vec<(usize, usize, usize)> = (0..cfg.da_grid.len())
        .flat_map(|d| (0..cfg.rn_grid.len()).flat_map(move |r| (0..cfg.reps).map(move |t| (d, r, t))))
        .collect();
    let run = |&(d, r, t): &(usize, usize, usize)| {
        let mut rng = trial_rng(cfg.scene.seed, d, r, t);
        run_trial(&template, &cfg.scene, &cfg.trial, cfg.da_grid[d], cfg.rn_grid[r], &mut rng)
    };
    let outcomes: Vec<Result<TrialOutcome>> = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?
            .install(|| jobs.par_iter().map(run).collect()),
        None => jobs.par_iter().map(run).collect(),
    };

    let mut result = SweepResult { rows: Vec::with_capacity(jobs.len() * 2), failures: Vec::new() };
    for (&(d, r, t), outcome) in jobs.iter().zip(outcomes) {
        let (da, rn) = (cfg.da_grid[d], cfg.rn_grid[r]);
        match outcome {
            Ok(o) => {
                for (method, e) in [(Method::Selection, o.selection), (Method::Random, o.random)] {
                    result.rows.push(TrialRow { da, rn, trial: t, method, trans_err: e.trans_err, rot_err: e.rot_err });
                }
            }
            Err(error) => result.failures.push(TrialFailure { da, rn, trial: t, error }),
        }
    }
    Ok(result)
}

pub fn write_trials_csv<W: Write>(result: &SweepResult, mut w: W) -> std::io::Result<()> {
    writeln!(w, "da,rn,trial,method,trans_err_m,rot_err_rad")?;
    for r in &result.rows {
        writeln!(w, "{},{},{},{},{:e},{:e}", r.da, r.rn, r.trial, r.method.as_str(), r.trans_err, r.rot_err)?;
    }
    Ok(())
}

pub fn write_summary_csv<W: Write>(result: &SweepResult, mut w: W) -> std::io::Result<()> {
    writeln!(w, "da,rn,method,mean_trans_err_m,stderr_m")?;
    for s in result.summary() {
        writeln!(w, "{},{},{},{:e},{:e}", s.da, s.rn, s.method.as_str(), s.mean_trans_err, s.stderr)?;
    }
    Ok(())
}
