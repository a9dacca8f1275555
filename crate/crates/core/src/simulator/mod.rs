//! Two-frame registration experiment: residuals picked by score against the
//! same number picked uniformly at random, over a grid of disturbance
//! amplitudes and budgets.

pub mod scene;
pub mod solve;
pub mod sweep;

pub use scene::{generate_scene, perturb_models, perturb_points, perturb_scene, random_pose, DisturbanceMode, Model, Scene, SceneConfig};
pub use solve::{solve_pose, solve_pose_detailed, PoseSolution, DEFAULT_ITERATIONS};
pub use sweep::{
    run_sweep, run_trial, score_observations, score_scene, select_budget, trial_rng, write_summary_csv, write_trials_csv, Method,
    PoseError, SummaryRow, SweepConfig, SweepResult, TrialFailure, TrialOutcome, TrialRow, TrialSettings,
};
