//! se(3) twists and SE(3) rigid transforms.
//!
//! Twists are stored as `(omega, v)` with the rotational generator first. A
//! twist scaled by a configuration `theta` exponentiates to the rigid motion
//! `exp(xi * theta)`; `log_map` is its inverse on the principal branch.
//!
//! Rotations are unit quaternions, renormalized after every composition.

use nalgebra::{Matrix3, Matrix4, Matrix6, Quaternion, Rotation3, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this rotation angle the closed-form coefficients switch to Taylor series.
pub const SMALL_ANGLE: f64 = 1e-6;

/// `log_map` refuses rotations within this margin of pi.
pub const BRANCH_MARGIN: f64 = 1e-6;

/// Coefficient threshold for the series form of the SE(3) left Jacobian.
const JACOBIAN_SERIES_ANGLE: f64 = 1e-2;

/// Twists whose rotational part falls below this norm (relative to the full
/// twist norm) are treated as pure translations when normalizing.
pub const PRISMATIC_OMEGA_TOL: f64 = 1e-9;

/// An element of se(3).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "TwistRepr", into = "TwistRepr")]
pub struct Twist {
    pub omega: Vector3<f64>,
    pub v: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
struct TwistRepr {
    omega: [f64; 3],
    v: [f64; 3],
}

impl From<TwistRepr> for Twist {
    fn from(r: TwistRepr) -> Self {
        Twist::new(Vector3::from(r.omega), Vector3::from(r.v))
    }
}

impl From<Twist> for TwistRepr {
    fn from(t: Twist) -> Self {
        TwistRepr {
            omega: t.omega.into(),
            v: t.v.into(),
        }
    }
}

impl Twist {
    pub fn new(omega: Vector3<f64>, v: Vector3<f64>) -> Self {
        Twist { omega, v }
    }

    pub fn zero() -> Self {
        Twist::new(Vector3::zeros(), Vector3::zeros())
    }

    /// Pure rotation about the line through `point` with direction `dir`.
    pub fn revolute(dir: Vector3<f64>, point: Vector3<f64>) -> Self {
        let omega = dir.normalize();
        Twist::new(omega, point.cross(&omega))
    }

    /// Pure translation along `dir`.
    pub fn prismatic(dir: Vector3<f64>) -> Self {
        Twist::new(Vector3::zeros(), dir.normalize())
    }

    pub fn from_vector(x: &Vector6<f64>) -> Self {
        Twist::new(x.fixed_rows::<3>(0).into_owned(), x.fixed_rows::<3>(3).into_owned())
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        let mut x = Vector6::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.omega);
        x.fixed_rows_mut::<3>(3).copy_from(&self.v);
        x
    }

    pub fn scale(&self, s: f64) -> Self {
        Twist::new(self.omega * s, self.v * s)
    }

    pub fn is_finite(&self) -> bool {
        self.omega.iter().chain(self.v.iter()).all(|x| x.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }

    /// True for the canonical forms `|omega| = 1` or `omega = 0, |v| = 1`.
    pub fn is_normalized(&self, tol: f64) -> bool {
        let w = self.omega.norm();
        if w == 0.0 {
            (self.v.norm() - 1.0).abs() <= tol
        } else {
            (w - 1.0).abs() <= tol
        }
    }

    /// Projects onto the canonical gauge. Returns the normalized twist and the
    /// factor `s` with `self = normalized * s`, so a configuration `theta`
    /// against `self` becomes `theta * s` against the normalized twist.
    ///
    /// Rotational parts below [`PRISMATIC_OMEGA_TOL`] relative to the twist
    /// norm are zeroed. Returns `None` for the zero twist.
    pub fn normalized(&self) -> Option<(Twist, f64)> {
        let total = self.norm();
        if !(total > 0.0) || !total.is_finite() {
            return None;
        }
        let w = self.omega.norm();
        if w > PRISMATIC_OMEGA_TOL * total {
            if w == 1.0 {
                return Some((*self, 1.0));
            }
            Some((self.scale(1.0 / w), w))
        } else {
            let t = self.v.norm();
            if t == 1.0 && w == 0.0 {
                return Some((*self, 1.0));
            }
            Some((Twist::new(Vector3::zeros(), self.v / t), t))
        }
    }
}

/// An element of SE(3) acting on points as `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransformRepr", into = "TransformRepr")]
pub struct RigidTransform {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
struct TransformRepr {
    q: [f64; 4],
    t: [f64; 3],
}

impl TryFrom<TransformRepr> for RigidTransform {
    type Error = String;

    fn try_from(r: TransformRepr) -> std::result::Result<Self, String> {
        let [w, x, y, z] = r.q;
        let q = Quaternion::new(w, x, y, z);
        let n = q.norm();
        if !n.is_finite() || n < 1e-12 {
            return Err(format!("quaternion {:?} cannot be normalized", r.q));
        }
        if r.t.iter().any(|v| !v.is_finite()) {
            return Err(format!("translation {:?} is not finite", r.t));
        }
        // Keep stored unit quaternions bit-exact so files re-save unchanged.
        let rotation = if (n - 1.0).abs() <= 4.0 * f64::EPSILON {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::from_quaternion(q)
        };
        Ok(RigidTransform {
            rotation,
            translation: Vector3::from(r.t),
        })
    }
}

impl From<RigidTransform> for TransformRepr {
    fn from(t: RigidTransform) -> Self {
        let q = t.rotation.quaternion();
        TransformRepr {
            q: [q.w, q.i, q.j, q.k],
            t: t.translation.into(),
        }
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        RigidTransform {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(UnitQuaternion::identity(), Vector3::zeros())
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(UnitQuaternion::identity(), t)
    }

    /// Builds a transform from a proper rotation matrix.
    pub fn from_rotation_matrix(r: &Matrix3<f64>, t: Vector3<f64>) -> Self {
        let rot = Rotation3::from_matrix_unchecked(*r);
        Self::new(UnitQuaternion::from_rotation_matrix(&rot), t)
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&self.rotation_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// `self * other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        let mut rotation = self.rotation * other.rotation;
        rotation.renormalize();
        RigidTransform::new(rotation, self.rotation * other.translation + self.translation)
    }

    pub fn inverse(&self) -> RigidTransform {
        let inv = self.rotation.inverse();
        RigidTransform::new(inv, -(inv * self.translation))
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        self.rotation.angle()
    }

    pub fn is_finite(&self) -> bool {
        let q = self.rotation.quaternion();
        q.coords.iter().all(|x| x.is_finite()) && self.translation.iter().all(|x| x.is_finite())
    }
}

pub fn skew(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// `(1 - cos a) / a^2` and `(a - sin a) / a^3`.
fn rodrigues_coefficients(a: f64) -> (f64, f64) {
    if a < SMALL_ANGLE {
        let a2 = a * a;
        (0.5 - a2 / 24.0, 1.0 / 6.0 - a2 / 120.0)
    } else {
        let h = (0.5 * a).sin();
        (2.0 * h * h / (a * a), (a - a.sin()) / (a * a * a))
    }
}

/// `exp(xi * theta)`.
pub fn exp_map(xi: &Twist, theta: f64) -> Result<RigidTransform> {
    if !xi.is_finite() || !theta.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "exp_map requires finite input (xi = {:?}, theta = {theta})",
            xi.to_vector().as_slice()
        )));
    }
    Ok(exp_unchecked(&xi.scale(theta)))
}

/// Exponential of an already-scaled twist, without input validation.
pub(crate) fn exp_unchecked(x: &Twist) -> RigidTransform {
    let phi = x.omega;
    let rho = x.v;
    let a = phi.norm();
    let rotation = if a < SMALL_ANGLE {
        let a2 = a * a;
        let s = 0.5 - a2 / 48.0;
        UnitQuaternion::new_unchecked(Quaternion::new(1.0 - a2 / 8.0, s * phi.x, s * phi.y, s * phi.z))
    } else {
        let s = (0.5 * a).sin() / a;
        UnitQuaternion::new_unchecked(Quaternion::new((0.5 * a).cos(), s * phi.x, s * phi.y, s * phi.z))
    };
    let mut rotation = rotation;
    rotation.renormalize();
    let (b, c) = rodrigues_coefficients(a);
    let k = skew(&phi);
    let v = Matrix3::identity() + k * b + k * k * c;
    RigidTransform::new(rotation, v * rho)
}

/// Principal-branch logarithm, folding `xi * theta` into one twist.
pub fn log_map(t: &RigidTransform) -> Result<Twist> {
    if !t.is_finite() {
        return Err(Error::InvalidArgument("log_map requires a finite transform".into()));
    }
    let mut q = *t.rotation.quaternion();
    if q.w < 0.0 {
        q = -q;
    }
    let xyz = q.imag();
    let s = xyz.norm();
    let angle = 2.0 * s.atan2(q.w);
    if angle >= std::f64::consts::PI - BRANCH_MARGIN {
        return Err(Error::BranchAmbiguity { angle });
    }
    let phi = if s < 1e-300 {
        Vector3::zeros()
    } else {
        xyz * (angle / s)
    };
    let d = if angle < SMALL_ANGLE {
        1.0 / 12.0 + angle * angle / 720.0
    } else {
        let half = 0.5 * angle;
        (1.0 - half / half.tan()) / (angle * angle)
    };
    let k = skew(&phi);
    let v_inv = Matrix3::identity() - k * 0.5 + k * k * d;
    Ok(Twist::new(phi, v_inv * t.translation))
}

/// Left Jacobian of SO(3).
pub fn so3_left_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let (b, c) = rodrigues_coefficients(phi.norm());
    let k = skew(phi);
    Matrix3::identity() + k * b + k * k * c
}

/// Left Jacobian of SE(3) in `(omega, v)` ordering:
/// `exp(x + d) ~ exp(J_l(x) d) * exp(x)` to first order.
pub fn left_jacobian(x: &Twist) -> Matrix6<f64> {
    let phi = x.omega;
    let a = phi.norm();
    let (c1, c2, c3) = if a < JACOBIAN_SERIES_ANGLE {
        let a2 = a * a;
        let a4 = a2 * a2;
        (
            1.0 / 6.0 - a2 / 120.0 + a4 / 5040.0,
            1.0 / 24.0 - a2 / 720.0 + a4 / 40320.0,
            1.0 / 120.0 - a2 / 2520.0 + a4 / 120960.0,
        )
    } else {
        let (s, c) = a.sin_cos();
        let a2 = a * a;
        let a3 = a2 * a;
        let a4 = a2 * a2;
        let a5 = a4 * a;
        let m = (1.0 - 0.5 * a2 - c) / a4;
        (
            (a - s) / a3,
            -m,
            -0.5 * (m - 3.0 * (a - s - a3 / 6.0) / a5),
        )
    };
    let p = skew(&phi);
    let r = skew(&x.v);
    let prp = p * r * p;
    let q = r * 0.5
        + (p * r + r * p + prp) * c1
        + (p * p * r + r * p * p - prp * 3.0) * c2
        + (prp * p + p * prp) * c3;
    let j = so3_left_jacobian(&phi);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&j);
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&j);
    out.fixed_view_mut::<3, 3>(3, 0).copy_from(&q);
    out
}

/// Right Jacobian of SE(3): `exp(x + d) ~ exp(x) * exp(J_r(x) d)`.
pub fn right_jacobian(x: &Twist) -> Matrix6<f64> {
    left_jacobian(&x.scale(-1.0))
}

/// Adjoint of `t`, mapping twists expressed in `t`'s source frame to its target frame.
pub fn adjoint(t: &RigidTransform) -> Matrix6<f64> {
    let r = t.rotation_matrix();
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
    out.fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&(skew(&t.translation) * r));
    out
}

/// Re-expresses a twist under the frame change `t`.
pub fn transform_twist(t: &RigidTransform, xi: &Twist) -> Twist {
    Twist::from_vector(&(adjoint(t) * xi.to_vector()))
}
