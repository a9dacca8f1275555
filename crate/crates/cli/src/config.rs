//! Flat `key = value` run configuration for `simulate`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use resel_core::simulator::{DisturbanceMode, SweepConfig};
use resel_core::{BeamModel, SelectionParams};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Recognised keys. Angles are in degrees, lengths in metres.
pub const KEYS: &[&str] = &[
    "seed",
    "da",
    "rn",
    "reps",
    "mode",
    "threads",
    "failure_budget",
    "iterations",
    "ring_count",
    "depth_min",
    "depth_max",
    "azimuth_step_deg",
    "elevation_min_deg",
    "elevation_max_deg",
    "plane_fraction",
    "pose_rot_max_deg",
    "pose_trans_max",
    "anchor_spread",
    "score_ratio_stop",
    "delta_z",
    "delta_h",
    "delta_v",
    "delta_alpha_deg",
    "sigma_omega_deg",
];

/// Parses `key = value` lines. Blank lines and `#` comments are skipped;
/// unknown and repeated keys are errors.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("line {}: expected key = value", i + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(ConfigError(format!("line {}: unknown key '{k}'", i + 1)));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(ConfigError(format!("line {}: duplicate key '{k}'", i + 1)));
        }
    }
    Ok(out)
}

fn value<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| ConfigError(format!("{key}: cannot parse '{v}'")))
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, ConfigError> {
    v.split(',').map(|s| value(key, s.trim())).collect()
}

/// Everything `simulate` needs besides the output directory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub sweep: SweepConfig,
    pub failure_budget: usize,
}

impl RunConfig {
    /// Applies parsed pairs on top of the current values.
    pub fn apply(&mut self, pairs: &BTreeMap<String, String>) -> Result<(), ConfigError> {
        let s = &mut self.sweep;
        let mut beam = s.trial.beam;
        for (k, v) in pairs {
            let key = k.as_str();
            match key {
                "seed" => s.scene.seed = value(key, v)?,
                "da" => s.da_grid = list(key, v)?,
                "rn" => s.rn_grid = list(key, v)?,
                "reps" => s.reps = value(key, v)?,
                "mode" => s.trial.mode = v.parse::<DisturbanceMode>().map_err(|e| ConfigError(e.to_string()))?,
                "threads" => s.threads = Some(value(key, v)?),
                "failure_budget" => self.failure_budget = value(key, v)?,
                "iterations" => s.trial.iterations = value(key, v)?,
                "ring_count" => s.scene.ring_count = value(key, v)?,
                "depth_min" => s.scene.depth_min = value(key, v)?,
                "depth_max" => s.scene.depth_max = value(key, v)?,
                "azimuth_step_deg" => s.scene.azimuth_step = value::<f64>(key, v)?.to_radians(),
                "elevation_min_deg" => s.scene.elevation_min = value::<f64>(key, v)?.to_radians(),
                "elevation_max_deg" => s.scene.elevation_max = value::<f64>(key, v)?.to_radians(),
                "plane_fraction" => s.scene.plane_fraction = value(key, v)?,
                "pose_rot_max_deg" => s.scene.pose_rot_max = value::<f64>(key, v)?.to_radians(),
                "pose_trans_max" => s.scene.pose_trans_max = value(key, v)?,
                "anchor_spread" => s.scene.anchor_spread = value(key, v)?,
                "score_ratio_stop" => {
                    let p = s.trial.selection;
                    s.trial.selection = SelectionParams::new(p.max_per_dim, value(key, v)?, p.prefilter_ratio)
                        .map_err(|e| ConfigError(e.to_string()))?;
                }
                "delta_z" => beam.delta_z = value(key, v)?,
                "delta_h" => beam.delta_h = value(key, v)?,
                "delta_v" => beam.delta_v = value(key, v)?,
                "delta_alpha_deg" => beam.delta_alpha = value::<f64>(key, v)?.to_radians(),
                "sigma_omega_deg" => beam.sigma_omega = value::<f64>(key, v)?.to_radians(),
                other => return Err(ConfigError(format!("unknown key '{other}'"))),
            }
        }
        s.trial.beam = BeamModel::new(beam.delta_z, beam.delta_h, beam.delta_v, beam.delta_alpha, beam.sigma_omega)
            .map_err(|e| ConfigError(e.to_string()))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.sweep;
        s.scene.validate().map_err(|e| ConfigError(e.to_string()))?;
        if s.da_grid.is_empty() || s.rn_grid.is_empty() || s.reps == 0 {
            return Err(ConfigError("da, rn and reps must be nonempty".into()));
        }
        if let Some(da) = s.da_grid.iter().find(|d| !(0.0..1.0).contains(*d)) {
            return Err(ConfigError(format!("da must lie in [0, 1), got {da}")));
        }
        let n = s.scene.point_count();
        if let Some(rn) = s.rn_grid.iter().find(|&&r| r < 6 || r > n) {
            return Err(ConfigError(format!("rn must lie in [6, {n}], got {rn}")));
        }
        if s.trial.iterations == 0 {
            return Err(ConfigError("iterations must be at least 1".into()));
        }
        if s.threads == Some(0) {
            return Err(ConfigError("threads must be at least 1".into()));
        }
        Ok(())
    }
}

/// Parses a `x=1,y=2` style list as used by `score --beam`.
pub fn parse_beam(text: &str) -> Result<BeamModel, ConfigError> {
    let mut b = BeamModel::vlp16();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = item.split_once('=').ok_or_else(|| ConfigError(format!("beam: expected key=value, got '{item}'")))?;
        let key = k.trim();
        let v = v.trim();
        match key {
            "delta_z" => b.delta_z = value(key, v)?,
            "delta_h" => b.delta_h = value(key, v)?,
            "delta_v" => b.delta_v = value(key, v)?,
            "delta_alpha_deg" => b.delta_alpha = value::<f64>(key, v)?.to_radians(),
            "sigma_omega_deg" => b.sigma_omega = value::<f64>(key, v)?.to_radians(),
            other => return Err(ConfigError(format!("beam: unknown key '{other}'"))),
        }
    }
    BeamModel::new(b.delta_z, b.delta_h, b.delta_v, b.delta_alpha, b.sigma_omega).map_err(|e| ConfigError(e.to_string()))
}
