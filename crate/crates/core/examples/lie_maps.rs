//! Exponential and logarithm maps on SE(3), and what they do to a point.

use artikit::lie::{exp_map, log_map, Twist};
use nalgebra::Vector3;

fn main() -> artikit::Result<()> {
    // A hinge along z through (0.5, 0, 0).
    let hinge = Twist::revolute(Vector3::z(), Vector3::new(0.5, 0.0, 0.0));
    let quarter = exp_map(&hinge, std::f64::consts::FRAC_PI_2)?;
    println!("quarter turn about the hinge:{}", quarter.to_matrix());

    let p = Vector3::new(1.0, 0.0, 0.0);
    println!("{p:?} -> {:?}", quarter.apply(&p));

    let back = log_map(&quarter)?;
    println!("log: omega {:?} v {:?} (|omega| = {:.6})", back.omega, back.v, back.omega.norm());

    let slide = exp_map(&Twist::prismatic(Vector3::x()), 0.25)?;
    println!("prismatic 25 cm: translation {:?}", slide.translation);
    Ok(())
}
