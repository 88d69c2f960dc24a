#![allow(dead_code)]

use artikit::artmodel::JointType;
use artikit::pipeline::PipelineConfig;
use artikit::synth::{fibonacci_sphere, standard_scene, SceneSpec, SynthConfig};
use artikit::trackfilter::StaticMode;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The 50-scene closure suite: even indices revolute (5 to 60 degrees), odd
/// prismatic (2 to 40 cm), axes on a Fibonacci sphere, moving camera, 30%
/// static points.
pub fn closure_suite(noisy: bool) -> Vec<SynthConfig> {
    let axes = fibonacci_sphere(50);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..50)
        .map(|i| {
            let f: f64 = rng.random();
            let (ty, mag) = if i % 2 == 0 {
                (JointType::Revolute, (5.0 + 55.0 * f).to_radians())
            } else {
                (JointType::Prismatic, 0.02 + 0.38 * f)
            };
            let mut spec = SceneSpec::new(ty, axes[i], mag);
            spec.axis_point = Vector3::from_fn(|_, _| rng.random_range(-0.5..0.5));
            spec.seed = 1000 + i as u64;
            spec.n_dynamic = 70;
            spec.n_static = 30;
            spec.moving_camera = true;
            if noisy {
                spec.noise_sigma = 0.005;
                spec.occlusion_rate = 0.2;
                spec.invalid_depth_rate = 0.05;
            }
            standard_scene(&spec)
        })
        .collect()
}

/// Pipeline settings for synthetic scenes: the camera moves, so static
/// points are found by their world-frame spread.
pub fn synth_pipeline() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.filter.static_mode = StaticMode::World3d;
    cfg
}

pub fn median(mut v: Vec<f64>) -> f64 {
    assert!(!v.is_empty());
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn percentile(mut v: Vec<f64>, p: f64) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let rank = ((p / 100.0) * v.len() as f64).ceil() as usize;
    v[rank.clamp(1, v.len()) - 1]
}
