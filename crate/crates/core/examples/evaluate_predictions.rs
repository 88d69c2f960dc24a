//! Scores hand-written predictions against ground truth.

use artikit::artmodel::{ArticulationRecord, JointType};
use artikit::evalkit::{angular_error, axis_distance, evaluate, render_table, GroundTruthRecord};
use artikit::lie::Twist;
use artikit::segmenter::Segment;
use nalgebra::Vector3;

fn main() -> artikit::Result<()> {
    let a = Vector3::new(0.0, 0.0, 1.0);
    let b = Vector3::new(0.0, 0.05, 1.0);
    println!("angle between axes: {:.3} deg", angular_error(&a, &b)?);
    println!(
        "distance between lines: {:.3} m",
        axis_distance(&a, &Vector3::zeros(), &b, &Vector3::new(0.1, 0.0, 0.0))?
    );

    let gt = vec![
        GroundTruthRecord {
            segment: Segment::new(20, 80),
            joint_type: JointType::Revolute,
            axis_dir: [0.0, 0.0, 1.0],
            axis_point: Some([0.4, 0.0, 0.0]),
            difficulty: None,
        },
        GroundTruthRecord {
            segment: Segment::new(150, 210),
            joint_type: JointType::Prismatic,
            axis_dir: [1.0, 0.0, 0.0],
            axis_point: None,
            difficulty: None,
        },
    ];
    let pred = vec![ArticulationRecord {
        segment: Segment::new(22, 82),
        joint_type: JointType::Revolute,
        axis_dir: [0.0, 0.02, 1.0],
        axis_point: Some([0.41, 0.0, 0.3]),
        axis_point_near_anchor: None,
        twist: Twist::revolute(Vector3::z(), Vector3::new(0.41, 0.0, 0.0)),
        thetas: vec![0.0, 0.1],
        rms: 1e-3,
        flags: vec![],
    }];
    let report = evaluate(&pred, &gt)?;
    print!("{}", render_table(&report));
    Ok(())
}
