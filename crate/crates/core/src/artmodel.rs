//! Articulation model from a relative pose sequence.
//!
//! A twist and per-pose configurations are fitted to the poses by
//! minimizing the tangent-space discrepancy `log(exp(xi * theta_m)^-1 * T_m)`.
//! The joint type is chosen by comparing that unconstrained fit with a
//! translation-only fit.

use nalgebra::{DMatrix, DVector, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{self, exp_unchecked, left_jacobian, log_map, right_jacobian, RigidTransform, Twist};
use crate::lm::{self, LeastSquaresProblem, LmConfig};
use crate::segmenter::Segment;
use crate::trajest::canonicalize;

/// Poses whose log norm stays below this are indistinguishable from identity.
pub const MIN_POSE_MOTION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointType {
    Prismatic,
    Revolute,
}

impl std::fmt::Display for JointType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            JointType::Prismatic => "prismatic",
            JointType::Revolute => "revolute",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    /// Smallest total rotation (rad) accepted as revolute.
    pub theta_rot_min: f64,
    /// Prismatic travel (m) below which the estimate is flagged low-motion.
    pub trans_min: f64,
    /// Relative residual improvement the rotating model must achieve.
    pub residual_margin: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            theta_rot_min: 0.05,
            trans_min: 0.02,
            residual_margin: 0.2,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.theta_rot_min, self.trans_min, self.residual_margin]
            .iter()
            .all(|x| *x > 0.0 && x.is_finite())
            && self.residual_margin < 1.0;
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "classifier thresholds must be positive (margin below 1), got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateFlag {
    NonConverged,
    LowMotion,
    AnchorFallback,
}

/// Twist fitted to a pose sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseFit {
    pub twist: Twist,
    /// One configuration per pose; the first is 0.
    pub thetas: Vec<f64>,
    /// Root mean square of the tangent residual norms over poses 1..
    pub pose_rms: f64,
    pub converged: bool,
}

impl PoseFit {
    /// Largest configuration spread scaled by the rotation rate.
    pub fn total_rotation(&self) -> f64 {
        spread(&self.thetas) * self.twist.omega.norm()
    }

    pub fn total_translation(&self) -> f64 {
        spread(&self.thetas) * self.twist.v.norm()
    }
}

fn spread(x: &[f64]) -> f64 {
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi >= lo {
        hi - lo
    } else {
        0.0
    }
}

#[derive(Debug, Clone)]
struct PoseParams {
    xi: Vector6<f64>,
    thetas: Vec<f64>,
}

struct PoseSequenceProblem<'a> {
    poses: &'a [RigidTransform],
    /// Restrict to `omega = 0`.
    prismatic: bool,
}

/// Residual substituted when a trial step leaves the principal branch.
const BRANCH_PENALTY: f64 = 1e6;

impl PoseSequenceProblem<'_> {
    fn tangent_dim(&self) -> usize {
        if self.prismatic {
            2
        } else {
            5
        }
    }

    /// Columns spanning the twist's tangent space, embedded in R^6.
    fn basis(&self, xi: &Vector6<f64>) -> DMatrix<f64> {
        if self.prismatic {
            let v = DVector::from_column_slice(xi.fixed_rows::<3>(3).as_slice());
            let b = lm::sphere_tangent_basis(&v);
            let mut out = DMatrix::zeros(6, 2);
            out.view_mut((3, 0), (3, 2)).copy_from(&b);
            out
        } else {
            lm::sphere_tangent_basis(&DVector::from_column_slice(xi.as_slice()))
        }
    }

    fn residual(xi: &Twist, theta: f64, pose: &RigidTransform) -> Option<Vector6<f64>> {
        let model = exp_unchecked(&xi.scale(theta));
        log_map(&model.inverse().compose(pose)).ok().map(|r| r.to_vector())
    }
}

impl LeastSquaresProblem for PoseSequenceProblem<'_> {
    type Params = PoseParams;

    fn residuals(&self, p: &PoseParams) -> DVector<f64> {
        let xi = Twist::from_vector(&p.xi);
        let m = p.thetas.len();
        let mut r = DVector::zeros(6 * m);
        for (k, (theta, pose)) in p.thetas.iter().zip(&self.poses[1..]).enumerate() {
            let rk = Self::residual(&xi, *theta, pose).unwrap_or(Vector6::repeat(BRANCH_PENALTY));
            r.fixed_rows_mut::<6>(6 * k).copy_from(&rk);
        }
        r
    }

    fn jacobian(&self, p: &PoseParams) -> DMatrix<f64> {
        let xi = Twist::from_vector(&p.xi);
        let m = p.thetas.len();
        let dim = self.tangent_dim();
        let basis = self.basis(&p.xi);
        let mut j = DMatrix::zeros(6 * m, dim + m);
        for (k, (theta, pose)) in p.thetas.iter().zip(&self.poses[1..]).enumerate() {
            let x = xi.scale(*theta);
            let r = Self::residual(&xi, *theta, pose).unwrap_or_else(Vector6::zeros);
            let jl_inv = left_jacobian(&Twist::from_vector(&r))
                .try_inverse()
                .unwrap_or_else(Matrix6::identity);
            // d r / d x
            let g = -(jl_inv * right_jacobian(&x));
            let d_xi = g * *theta;
            let gb = DMatrix::from_fn(6, 6, |a, b| d_xi[(a, b)]) * &basis;
            j.view_mut((6 * k, 0), (6, dim)).copy_from(&gb);
            j.fixed_view_mut::<6, 1>(6 * k, dim + k).copy_from(&(g * p.xi));
        }
        j
    }

    fn retract(&self, p: &PoseParams, d: &DVector<f64>) -> PoseParams {
        let dim = self.tangent_dim();
        let dx = self.basis(&p.xi) * d.rows(0, dim);
        let mut xi = p.xi + Vector6::from_column_slice(dx.as_slice());
        if self.prismatic {
            let v = xi.fixed_rows::<3>(3).normalize();
            xi = Vector6::new(0.0, 0.0, 0.0, v.x, v.y, v.z);
        } else {
            xi.normalize_mut();
        }
        let thetas = p.thetas.iter().enumerate().map(|(k, t)| t + d[dim + k]).collect();
        PoseParams { xi, thetas }
    }
}

fn check_poses(poses: &[RigidTransform]) -> Result<Vec<Vector6<f64>>> {
    if poses.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 poses, got {}",
            poses.len()
        )));
    }
    let logs: Vec<Vector6<f64>> = poses
        .iter()
        .map(|p| log_map(p).map(|x| x.to_vector()))
        .collect::<Result<_>>()?;
    if logs[0].norm() > 1e-9 {
        return Err(Error::InvalidArgument("first relative pose must be the identity".into()));
    }
    if logs.iter().all(|x| x.norm() <= MIN_POSE_MOTION) {
        return Err(Error::InsufficientMotion("all poses are within 1e-6 of identity".into()));
    }
    Ok(logs)
}

fn run_pose_fit(
    poses: &[RigidTransform],
    xi0: Vector6<f64>,
    thetas0: Vec<f64>,
    prismatic: bool,
) -> Result<PoseFit> {
    let problem = PoseSequenceProblem { poses, prismatic };
    let out = lm::minimize(
        &problem,
        PoseParams {
            xi: xi0,
            thetas: thetas0,
        },
        &LmConfig::default(),
    );
    let m = out.params.thetas.len();
    let mut thetas = Vec::with_capacity(m + 1);
    thetas.push(0.0);
    thetas.extend(out.params.thetas);
    let (twist, thetas) = canonicalize(&Twist::from_vector(&out.params.xi), &thetas)
        .ok_or_else(|| Error::Inconsistent("fitted twist vanished".into()))?;
    let twist = if prismatic {
        Twist::new(Vector3::zeros(), twist.v)
    } else {
        twist
    };
    Ok(PoseFit {
        twist,
        thetas,
        pose_rms: (out.cost / m as f64).sqrt(),
        converged: out.converged,
    })
}

/// Unconstrained twist fit, initialized from the largest-motion pose.
pub fn fit_twist_to_poses(poses: &[RigidTransform]) -> Result<PoseFit> {
    let logs = check_poses(poses)?;
    let far = (0..logs.len())
        .max_by(|&a, &b| logs[a].norm().total_cmp(&logs[b].norm()))
        .unwrap();
    let xi0 = logs[far].normalize();
    let thetas0 = logs[1..].iter().map(|x| x.dot(&xi0)).collect();
    run_pose_fit(poses, xi0, thetas0, false)
}

/// Translation-only fit (`omega = 0`).
pub fn fit_prismatic_to_poses(poses: &[RigidTransform]) -> Result<PoseFit> {
    check_poses(poses)?;
    let far = poses
        .iter()
        .max_by(|a, b| a.translation.norm().total_cmp(&b.translation.norm()))
        .unwrap();
    let dir = if far.translation.norm() > 0.0 {
        far.translation.normalize()
    } else {
        Vector3::x()
    };
    let xi0 = Vector6::new(0.0, 0.0, 0.0, dir.x, dir.y, dir.z);
    let thetas0 = poses[1..].iter().map(|p| p.translation.dot(&dir)).collect();
    run_pose_fit(poses, xi0, thetas0, true)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub joint_type: JointType,
    pub prismatic: PoseFit,
    pub total_rotation: f64,
}

/// Revolute iff the unconstrained fit rotates by at least `theta_rot_min`
/// and beats the prismatic fit's residual by the configured margin.
pub fn classify_joint(
    unconstrained: &PoseFit,
    poses: &[RigidTransform],
    cfg: &ClassifierConfig,
) -> Result<Classification> {
    let prismatic = fit_prismatic_to_poses(poses)?;
    let total_rotation = unconstrained.total_rotation();
    let revolute = total_rotation >= cfg.theta_rot_min
        && unconstrained.pose_rms < (1.0 - cfg.residual_margin) * prismatic.pose_rms;
    Ok(Classification {
        joint_type: if revolute {
            JointType::Revolute
        } else {
            JointType::Prismatic
        },
        prismatic,
        total_rotation,
    })
}

/// Direction and (revolute only) the axis point closest to the origin.
pub fn extract_axis(twist: &Twist, joint_type: JointType) -> Result<(Vector3<f64>, Option<Vector3<f64>>)> {
    match joint_type {
        JointType::Revolute => {
            let w2 = twist.omega.norm_squared();
            if w2.sqrt() < 1e-9 {
                return Err(Error::Inconsistent("revolute twist without rotation".into()));
            }
            Ok((
                twist.omega / w2.sqrt(),
                Some(twist.omega.cross(&twist.v) / w2),
            ))
        }
        JointType::Prismatic => {
            let n = twist.v.norm();
            if n < 1e-12 {
                return Err(Error::Inconsistent("prismatic twist without translation".into()));
            }
            Ok((twist.v / n, None))
        }
    }
}

/// Final articulation model, in the world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ArticulationEstimate {
    pub joint_type: JointType,
    pub axis_dir: Vector3<f64>,
    pub axis_point: Option<Vector3<f64>>,
    /// Axis point closest to the anchor.
    pub axis_point_near_anchor: Option<Vector3<f64>>,
    pub twist: Twist,
    pub thetas: Vec<f64>,
    pub pose_rms: f64,
    pub flags: Vec<EstimateFlag>,
}

/// Fits, classifies and moves the model from the anchor frame to the world.
pub fn estimate_articulation(
    relative_poses: &[RigidTransform],
    anchor: &RigidTransform,
    cfg: &ClassifierConfig,
) -> Result<ArticulationEstimate> {
    let unconstrained = fit_twist_to_poses(relative_poses)?;
    let class = classify_joint(&unconstrained, relative_poses, cfg)?;
    let chosen = match class.joint_type {
        JointType::Revolute => &unconstrained,
        JointType::Prismatic => &class.prismatic,
    };
    let mut flags = Vec::new();
    if !chosen.converged {
        flags.push(EstimateFlag::NonConverged);
    }
    let low = match class.joint_type {
        JointType::Revolute => class.total_rotation < cfg.theta_rot_min,
        JointType::Prismatic => chosen.total_translation() < cfg.trans_min,
    };
    if low {
        flags.push(EstimateFlag::LowMotion);
    }
    let twist = lie::transform_twist(anchor, &chosen.twist);
    let (axis_dir, axis_point) = extract_axis(&twist, class.joint_type)?;
    let axis_point_near_anchor = axis_point.map(|p| {
        let c = anchor.translation;
        p + axis_dir * axis_dir.dot(&(c - p))
    });
    Ok(ArticulationEstimate {
        joint_type: class.joint_type,
        axis_dir,
        axis_point,
        axis_point_near_anchor,
        twist,
        thetas: chosen.thetas.clone(),
        pose_rms: chosen.pose_rms,
        flags,
    })
}

/// One per-segment entry of a results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticulationRecord {
    pub segment: Segment,
    #[serde(rename = "type")]
    pub joint_type: JointType,
    pub axis_dir: [f64; 3],
    pub axis_point: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis_point_near_anchor: Option<[f64; 3]>,
    pub twist: Twist,
    pub thetas: Vec<f64>,
    pub rms: f64,
    pub flags: Vec<EstimateFlag>,
}

impl ArticulationRecord {
    pub fn new(segment: Segment, e: &ArticulationEstimate) -> Self {
        ArticulationRecord {
            segment,
            joint_type: e.joint_type,
            axis_dir: e.axis_dir.into(),
            axis_point: e.axis_point.map(Into::into),
            axis_point_near_anchor: e.axis_point_near_anchor.map(Into::into),
            twist: e.twist,
            thetas: e.thetas.clone(),
            rms: e.pose_rms,
            flags: e.flags.clone(),
        }
    }
}
