//! Smooths a jittery 1-D series with gaps, then a full 3-D track.

use artikit::smoother::{smooth_series, smooth_track, SmootherConfig};
use artikit::trackio::Track3D;
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> artikit::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise = Normal::new(0.0, 0.01).unwrap();
    let truth: Vec<f64> = (0..60).map(|t| (t as f64 * 0.1).sin()).collect();
    let observed: Vec<f64> = truth.iter().map(|x| x + noise.sample(&mut rng)).collect();
    let mut weights = vec![1.0; 60];
    weights[20..26].iter_mut().for_each(|w| *w = 0.0);

    let cfg = SmootherConfig::default();
    let smoothed = smooth_series(&observed, &weights, &cfg)?;
    let rms = |a: &[f64]| (a.iter().zip(&truth).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / 60.0).sqrt();
    println!("rms error raw {:.4}, smoothed {:.4}", rms(&observed), rms(&smoothed));
    println!("filled gap at t=23: {:.4} (truth {:.4})", smoothed[23], truth[23]);

    let track = Track3D {
        id: 0,
        positions: (0..60)
            .map(|t| Vector3::new(t as f64 * 0.01, observed[t], 1.0))
            .collect(),
        valid: weights.iter().map(|w| *w > 0.0).collect(),
    };
    let vis = track.valid.clone();
    let out = smooth_track(&track, &vis, &cfg)?;
    println!("track sample 23: {:?}", out.positions[23]);
    Ok(())
}
