//! Shared fixtures for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use resel_core::simulator::{generate_scene, Scene, SceneConfig};
use resel_core::{ResidualKind, ScoredResidual, SensitivityVector, Vec6};

/// `n` residuals with uniform sensitivities and uncertainties.
pub fn random_scored(n: usize, seed: u64) -> Vec<ScoredResidual> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|id| {
            let s = Vec6::from_fn(|_, _| rng.gen_range(0.0..10.0));
            let kind = if rng.gen_bool(0.5) { ResidualKind::Plane } else { ResidualKind::Line };
            ScoredResidual::new(id, kind, SensitivityVector::new(s).unwrap(), rng.gen_range(0.01..1.0)).unwrap()
        })
        .collect()
}

/// Full-size default scene.
pub fn default_scene() -> (SceneConfig, Scene) {
    let cfg = SceneConfig::default();
    let scene = generate_scene(&cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed)).unwrap();
    (cfg, scene)
}
