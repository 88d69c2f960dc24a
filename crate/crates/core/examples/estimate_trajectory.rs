//! Registers a rotating point cloud step by step, fits one shared twist,
//! and reads off the joint.

use artikit::artmodel::{estimate_articulation, ClassifierConfig};
use artikit::lie::{exp_map, RigidTransform, Twist};
use artikit::trackio::{SegmentTrack, Track3D};
use artikit::trajest::{build_correspondences, fit, EstimationMode};
use nalgebra::{Vector2, Vector3};

fn main() -> artikit::Result<()> {
    let hinge = Twist::revolute(Vector3::new(0.0, 1.0, 0.0), Vector3::new(0.2, 0.0, 1.0));
    let poses: Vec<RigidTransform> = (0..=20)
        .map(|m| exp_map(&hinge, 0.03 * m as f64))
        .collect::<artikit::Result<_>>()?;

    let tracks: Vec<SegmentTrack> = (0..40)
        .map(|i| {
            let f = i as f64;
            let p = Vector3::new(0.5 + 0.2 * (f * 0.7).sin(), 0.3 * (f * 0.3).cos(), 1.0 + 0.1 * (f * 1.3).sin());
            SegmentTrack {
                track: Track3D {
                    id: i,
                    positions: poses.iter().map(|t| t.apply(&p)).collect(),
                    valid: vec![true; poses.len()],
                },
                uv: vec![Vector2::zeros(); poses.len()],
                vis: vec![true; poses.len()],
            }
        })
        .collect();

    let corr = build_correspondences(&tracks, 2)?;
    for mode in [EstimationMode::Independent, EstimationMode::Regularized] {
        let traj = fit(&corr, mode)?;
        let joint = estimate_articulation(&traj.chain.relative_poses, &traj.chain.anchor, &ClassifierConfig::default())?;
        println!(
            "{mode:?}: {} axis {:?} through {:?}, rms {:.2e}",
            joint.joint_type,
            joint.axis_dir.as_slice(),
            joint.axis_point.map(|p| p.as_slice().to_vec()),
            traj.rms_residual
        );
    }
    Ok(())
}
