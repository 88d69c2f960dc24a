//! End to end on a synthetic drawer and door: render, run, score.
//!
//! `cargo run --release --example synth_closure -- 0.005` adds depth noise.

use artikit::artmodel::JointType;
use artikit::evalkit::{evaluate, render_table};
use artikit::pipeline::{run, PipelineConfig};
use artikit::synth::{generate, standard_scene, SceneSpec};
use artikit::trackfilter::StaticMode;
use nalgebra::Vector3;

fn main() -> artikit::Result<()> {
    let sigma: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.0);
    let mut cfg = PipelineConfig::default();
    cfg.filter.static_mode = StaticMode::World3d;

    let scenes = [
        (JointType::Revolute, Vector3::new(0.1, 0.0, 1.0), 0.9),
        (JointType::Prismatic, Vector3::new(1.0, 0.2, 0.0), 0.25),
    ];
    let mut preds = Vec::new();
    let mut truth = Vec::new();
    for (i, (ty, dir, mag)) in scenes.into_iter().enumerate() {
        let mut spec = SceneSpec::new(ty, dir, mag);
        spec.axis_point = Vector3::new(0.3, -0.1, 0.2);
        spec.seed = i as u64;
        spec.noise_sigma = sigma;
        let scene = generate(&standard_scene(&spec))?;
        let out = run(&scene.tracks, &cfg)?;
        for f in &out.results.failures {
            eprintln!("segment failed: {:?}", f);
        }
        preds.extend(out.results.results);
        truth.extend(scene.ground_truth);
    }
    // Both scenes use the same window, so score them one at a time.
    for (p, g) in preds.iter().zip(&truth) {
        let report = evaluate(std::slice::from_ref(p), std::slice::from_ref(g))?;
        print!("{}", render_table(&report));
    }
    Ok(())
}
