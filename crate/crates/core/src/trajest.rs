//! Part trajectory estimation from world-frame point tracks.
//!
//! Keyframes are taken every `stride` frames; step `m` pairs keyframes `m`
//! and `m + 1` using the points visible at both. Each step's motion is a
//! world-frame rigid displacement `to = T_m * from`, estimated either
//! independently per step (closed-form registration) or jointly as
//! `T_m = exp(xi * theta_m)` with one shared unit twist `xi`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix3x6, SymmetricEigen, Vector3, Vector6, SVD};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lie::{self, exp_unchecked, left_jacobian, log_map, skew, RigidTransform, Twist};
use crate::lm::{self, LeastSquaresProblem, LmConfig};
use crate::trackio::SegmentTrack;

/// Smallest usable pair count per step.
pub const MIN_PAIRS: usize = 3;

/// Below this largest pair displacement (meters) a segment has no usable motion.
pub const MIN_MOTION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimationMode {
    Independent,
    Regularized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointPair {
    /// Index into the track list the set was built from.
    pub track: usize,
    pub from: Vector3<f64>,
    pub to: Vector3<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceStep {
    pub from_frame: usize,
    pub to_frame: usize,
    pub pairs: Vec<PointPair>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet {
    pub stride: usize,
    pub steps: Vec<CorrespondenceStep>,
    pub track_ids: Vec<u64>,
    /// Points visible at each keyframe, used to place the anchor.
    pub keyframe_points: Vec<Vec<Vector3<f64>>>,
}

impl CorrespondenceSet {
    pub fn pair_count(&self) -> usize {
        self.steps.iter().map(|s| s.pairs.len()).sum()
    }
}

/// Pairs keyframes `(m * stride, (m + 1) * stride)` over the segment.
pub fn build_correspondences(tracks: &[SegmentTrack], stride: usize) -> Result<CorrespondenceSet> {
    if stride < 1 {
        return Err(Error::InvalidArgument("stride must be at least 1".into()));
    }
    let n = tracks.first().map(|t| t.len()).unwrap_or(0);
    if tracks.iter().any(|t| t.len() != n || t.track.positions.len() != n) {
        return Err(Error::InvalidArgument("tracks differ in length".into()));
    }
    if n <= stride {
        return Err(Error::InvalidArgument(format!(
            "{n} frames cannot form a step at stride {stride}"
        )));
    }
    let keyframes: Vec<usize> = (0..n).step_by(stride).collect();
    let keyframe_points = keyframes
        .iter()
        .map(|&f| {
            tracks
                .iter()
                .filter(|t| t.vis[f])
                .map(|t| t.track.positions[f])
                .collect()
        })
        .collect();
    let mut steps = Vec::with_capacity(keyframes.len() - 1);
    for (m, w) in keyframes.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let pairs: Vec<PointPair> = tracks
            .iter()
            .enumerate()
            .filter(|(_, t)| t.vis[a] && t.vis[b])
            .map(|(i, t)| PointPair {
                track: i,
                from: t.track.positions[a],
                to: t.track.positions[b],
                weight: 1.0,
            })
            .collect();
        if pairs.len() < MIN_PAIRS {
            return Err(Error::DegenerateStep {
                step: m,
                pairs: pairs.len(),
            });
        }
        steps.push(CorrespondenceStep {
            from_frame: a,
            to_frame: b,
            pairs,
        });
    }
    Ok(CorrespondenceSet {
        stride,
        steps,
        track_ids: tracks.iter().map(|t| t.id()).collect(),
        keyframe_points,
    })
}

/// Weighted least-squares rigid registration `to ~ T * from`.
///
/// Fails when the source points are collinear (second singular value of
/// their covariance at most `1e-9` times the largest).
pub fn register_rigid(pairs: &[PointPair]) -> Option<RigidTransform> {
    let wsum: f64 = pairs.iter().map(|p| p.weight).sum();
    if pairs.len() < MIN_PAIRS || !(wsum > 0.0) {
        return None;
    }
    let src_c = pairs.iter().map(|p| p.from * p.weight).sum::<Vector3<f64>>() / wsum;
    let dst_c = pairs.iter().map(|p| p.to * p.weight).sum::<Vector3<f64>>() / wsum;
    let mut cov = Matrix3::zeros();
    let mut spread = Matrix3::zeros();
    for p in pairs {
        let a = p.from - src_c;
        let b = p.to - dst_c;
        cov += a * b.transpose() * p.weight;
        spread += a * a.transpose() * p.weight;
    }
    let sv = SVD::new(spread, false, false).singular_values;
    let mut s = [sv[0], sv[1], sv[2]];
    s.sort_by(|a, b| b.total_cmp(a));
    if !(s[0] > 0.0) || s[1] <= 1e-9 * s[0] {
        return None;
    }
    let svd = SVD::new(cov, true, true);
    let u = svd.u?;
    let v = svd.v_t?.transpose();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        let weakest = svd.singular_values.imin();
        d[(weakest, weakest)] = -1.0;
    }
    let r = v * d * u.transpose();
    let t = dst_c - r * src_c;
    Some(RigidTransform::from_rotation_matrix(&r, t))
}

/// Anchor and chained poses for a sequence of world-frame step displacements.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseChain {
    pub anchor: RigidTransform,
    pub world_poses: Vec<RigidTransform>,
    pub relative_poses: Vec<RigidTransform>,
    /// Keyframe whose points placed the anchor; non-zero means a fallback.
    pub anchor_keyframe: usize,
}

/// Places the anchor at the centroid of the earliest non-empty keyframe
/// (identity rotation) and chains `T_W,m = D_m * T_W,m-1`.
pub fn integrate_poses(
    step_transforms: &[RigidTransform],
    keyframe_points: &[Vec<Vector3<f64>>],
) -> Result<PoseChain> {
    if step_transforms.is_empty() {
        return Err(Error::InvalidArgument("no step transforms to integrate".into()));
    }
    let (anchor_keyframe, pts) = keyframe_points
        .iter()
        .enumerate()
        .find(|(_, p)| !p.is_empty())
        .ok_or_else(|| Error::InvalidArgument("no visible keyframe points for the anchor".into()))?;
    let centroid = pts.iter().sum::<Vector3<f64>>() / pts.len() as f64;
    let anchor = RigidTransform::from_translation(centroid);
    let anchor_inv = anchor.inverse();
    let mut world_poses = Vec::with_capacity(step_transforms.len() + 1);
    world_poses.push(anchor);
    for d in step_transforms {
        let prev = *world_poses.last().unwrap();
        world_poses.push(d.compose(&prev));
    }
    let mut relative_poses: Vec<RigidTransform> =
        world_poses.iter().map(|w| anchor_inv.compose(w)).collect();
    relative_poses[0] = RigidTransform::identity();
    Ok(PoseChain {
        anchor,
        world_poses,
        relative_poses,
        anchor_keyframe,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEstimate {
    pub mode: EstimationMode,
    /// Shared normalized twist (regularized mode only).
    pub base_twist: Option<Twist>,
    /// Per-step configurations against `base_twist` (regularized mode only).
    pub thetas: Vec<f64>,
    pub step_transforms: Vec<RigidTransform>,
    pub chain: PoseChain,
    /// Sum of squared pair residuals.
    pub cost: f64,
    pub rms_residual: f64,
    /// Mean residual norm per track id, over the pairs it contributed.
    pub per_track_residuals: BTreeMap<u64, f64>,
    pub converged: bool,
    pub iterations: usize,
}

struct ResidualStats {
    cost: f64,
    rms: f64,
    per_track: BTreeMap<u64, f64>,
}

fn residual_stats(corr: &CorrespondenceSet, transforms: &[RigidTransform]) -> ResidualStats {
    let mut cost = 0.0;
    let mut wsum = 0.0;
    let mut acc: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for (step, t) in corr.steps.iter().zip(transforms) {
        for p in &step.pairs {
            let e = (p.to - t.apply(&p.from)).norm();
            cost += p.weight * e * e;
            wsum += p.weight;
            let slot = acc.entry(corr.track_ids[p.track]).or_insert((0.0, 0));
            slot.0 += e;
            slot.1 += 1;
        }
    }
    ResidualStats {
        cost,
        rms: if wsum > 0.0 { (cost / wsum).sqrt() } else { 0.0 },
        per_track: acc.into_iter().map(|(id, (s, n))| (id, s / n as f64)).collect(),
    }
}

fn finish(
    corr: &CorrespondenceSet,
    mode: EstimationMode,
    base_twist: Option<Twist>,
    thetas: Vec<f64>,
    step_transforms: Vec<RigidTransform>,
    converged: bool,
    iterations: usize,
) -> Result<TrajectoryEstimate> {
    let chain = integrate_poses(&step_transforms, &corr.keyframe_points)?;
    let stats = residual_stats(corr, &step_transforms);
    Ok(TrajectoryEstimate {
        mode,
        base_twist,
        thetas,
        step_transforms,
        chain,
        cost: stats.cost,
        rms_residual: stats.rms,
        per_track_residuals: stats.per_track,
        converged,
        iterations,
    })
}

/// Registers every step on its own.
pub fn fit_independent(corr: &CorrespondenceSet) -> Result<TrajectoryEstimate> {
    let transforms = independent_transforms(corr)?;
    finish(corr, EstimationMode::Independent, None, Vec::new(), transforms, true, 0)
}

fn independent_transforms(corr: &CorrespondenceSet) -> Result<Vec<RigidTransform>> {
    if corr.steps.is_empty() {
        return Err(Error::InvalidArgument("correspondence set has no steps".into()));
    }
    corr.steps
        .iter()
        .enumerate()
        .map(|(m, s)| {
            if s.pairs.len() < MIN_PAIRS {
                return Err(Error::DegenerateStep {
                    step: m,
                    pairs: s.pairs.len(),
                });
            }
            register_rigid(&s.pairs).ok_or(Error::DegenerateGeometry { step: m })
        })
        .collect()
}

/// Brings a twist and its configurations to the canonical gauge: unit
/// rotational part (or zero rotation with unit translation), and a
/// non-negative configuration sum.
pub fn canonicalize(xi: &Twist, thetas: &[f64]) -> Option<(Twist, Vec<f64>)> {
    let (mut n, s) = xi.normalized()?;
    let mut th: Vec<f64> = thetas.iter().map(|t| t * s).collect();
    if th.iter().sum::<f64>() < 0.0 {
        n = n.scale(-1.0);
        th.iter_mut().for_each(|t| *t = -*t);
    }
    Some((n, th))
}

#[derive(Debug, Clone)]
struct SharedTwist {
    /// Unit 6-vector `(omega, v)`.
    xi: Vector6<f64>,
    thetas: Vec<f64>,
}

/// `(from, to, weight)`.
type WeightedPair = (Vector3<f64>, Vector3<f64>, f64);

/// Centered pair data for the shared-twist problem.
struct SharedTwistProblem {
    steps: Vec<Vec<WeightedPair>>,
    rows: usize,
}

impl SharedTwistProblem {
    fn point_jacobian(x: &Twist, y: &Vector3<f64>) -> Matrix3x6<f64> {
        // d(exp(x + d) p)/dd = [-[y]x  I] J_l(x), with y = exp(x) p
        let mut g = Matrix3x6::zeros();
        g.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-skew(y)));
        g.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
        g * left_jacobian(x)
    }
}

impl LeastSquaresProblem for SharedTwistProblem {
    type Params = SharedTwist;

    fn residuals(&self, p: &SharedTwist) -> DVector<f64> {
        let mut r = DVector::zeros(self.rows);
        let xi = Twist::from_vector(&p.xi);
        let mut row = 0;
        for (step, theta) in self.steps.iter().zip(&p.thetas) {
            let t = exp_unchecked(&xi.scale(*theta));
            for (from, to, w) in step {
                let e = (to - t.apply(from)) * w.sqrt();
                r.fixed_rows_mut::<3>(row).copy_from(&e);
                row += 3;
            }
        }
        r
    }

    fn jacobian(&self, p: &SharedTwist) -> DMatrix<f64> {
        let m = p.thetas.len();
        let basis = lm::sphere_tangent_basis(&DVector::from_column_slice(p.xi.as_slice()));
        let mut j = DMatrix::zeros(self.rows, 5 + m);
        let xi = Twist::from_vector(&p.xi);
        let mut row = 0;
        for (k, (step, theta)) in self.steps.iter().zip(&p.thetas).enumerate() {
            let x = xi.scale(*theta);
            let t = exp_unchecked(&x);
            for (from, _, w) in step {
                let y = t.apply(from);
                let g = Self::point_jacobian(&x, &y) * (-w.sqrt());
                let d_xi = g * *theta;
                for c in 0..5 {
                    let col = d_xi * basis.column(c).fixed_rows::<6>(0);
                    j.fixed_view_mut::<3, 1>(row, c).copy_from(&col);
                }
                j.fixed_view_mut::<3, 1>(row, 5 + k).copy_from(&(g * p.xi));
                row += 3;
            }
        }
        j
    }

    fn retract(&self, p: &SharedTwist, d: &DVector<f64>) -> SharedTwist {
        let basis = lm::sphere_tangent_basis(&DVector::from_column_slice(p.xi.as_slice()));
        let dx = &basis * d.rows(0, 5);
        let xi = (p.xi + Vector6::from_column_slice(dx.as_slice())).normalize();
        let thetas = p.thetas.iter().enumerate().map(|(k, t)| t + d[5 + k]).collect();
        SharedTwist { xi, thetas }
    }
}

/// Unit principal direction of a set of weighted 6-vectors, signed so the
/// projections sum to a non-negative value.
fn principal_direction(samples: &[(Vector6<f64>, f64)]) -> Option<Vector6<f64>> {
    let mut scatter = nalgebra::Matrix6::zeros();
    for (x, w) in samples {
        scatter += x * x.transpose() * *w;
    }
    let eig = SymmetricEigen::new(scatter);
    let k = eig.eigenvalues.imax();
    if !(eig.eigenvalues[k] > 0.0) {
        return None;
    }
    let mut dir: Vector6<f64> = eig.eigenvectors.column(k).into_owned();
    if samples.iter().map(|(x, w)| x.dot(&dir) * w).sum::<f64>() < 0.0 {
        dir = -dir;
    }
    Some(dir.normalize())
}

/// Jointly fits one shared twist and per-step configurations.
pub fn fit_regularized(corr: &CorrespondenceSet) -> Result<TrajectoryEstimate> {
    fit_regularized_with(corr, &LmConfig::default())
}

pub fn fit_regularized_with(corr: &CorrespondenceSet, config: &LmConfig) -> Result<TrajectoryEstimate> {
    let independent = independent_transforms(corr)?;
    let max_motion = corr
        .steps
        .iter()
        .flat_map(|s| s.pairs.iter())
        .map(|p| (p.to - p.from).norm())
        .fold(0.0, f64::max);
    if max_motion <= MIN_MOTION {
        return Err(Error::InsufficientMotion(format!(
            "largest pair displacement {max_motion:e} m"
        )));
    }

    // Work about the centroid of all source points for conditioning.
    let (sum, count) = corr
        .steps
        .iter()
        .flat_map(|s| s.pairs.iter())
        .fold((Vector3::zeros(), 0usize), |(s, n), p| (s + p.from, n + 1));
    let center = RigidTransform::from_translation(sum / count as f64);
    let center_inv = center.inverse();

    let mut samples = Vec::with_capacity(independent.len());
    for (t, step) in independent.iter().zip(&corr.steps) {
        let local = center_inv.compose(t).compose(&center);
        let weight: f64 = step.pairs.iter().map(|p| p.weight).sum();
        samples.push((log_map(&local)?.to_vector(), weight));
    }
    let xi0 = principal_direction(&samples)
        .ok_or_else(|| Error::InsufficientMotion("per-step motions are all zero".into()))?;
    let thetas0: Vec<f64> = samples.iter().map(|(x, _)| x.dot(&xi0)).collect();

    let shift = sum / count as f64;
    let problem = SharedTwistProblem {
        steps: corr
            .steps
            .iter()
            .map(|s| {
                s.pairs
                    .iter()
                    .map(|p| (p.from - shift, p.to - shift, p.weight))
                    .collect()
            })
            .collect(),
        rows: 3 * corr.pair_count(),
    };
    let out = lm::minimize(
        &problem,
        SharedTwist {
            xi: xi0,
            thetas: thetas0,
        },
        config,
    );
    if !out.converged {
        log::warn!(
            "shared-twist fit stopped after {} iterations without converging",
            out.iterations
        );
    }
    let local = Twist::from_vector(&out.params.xi);
    let world = lie::transform_twist(&center, &local);
    let (twist, thetas) = canonicalize(&world, &out.params.thetas)
        .ok_or_else(|| Error::InsufficientMotion("fitted twist vanished".into()))?;
    let step_transforms = thetas
        .iter()
        .map(|t| exp_unchecked(&twist.scale(*t)))
        .collect();
    finish(
        corr,
        EstimationMode::Regularized,
        Some(twist),
        thetas,
        step_transforms,
        out.converged,
        out.iterations,
    )
}

pub fn fit(corr: &CorrespondenceSet, mode: EstimationMode) -> Result<TrajectoryEstimate> {
    match mode {
        EstimationMode::Independent => fit_independent(corr),
        EstimationMode::Regularized => fit_regularized(corr),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::exp_map;
    use crate::trackio::Track3D;
    use nalgebra::{UnitQuaternion, Vector2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn static_tracks(points: &[Vector3<f64>], frames: usize) -> Vec<SegmentTrack> {
        points
            .iter()
            .enumerate()
            .map(|(i, p)| SegmentTrack {
                track: Track3D {
                    id: i as u64,
                    positions: vec![*p; frames],
                    valid: vec![true; frames],
                },
                uv: vec![Vector2::zeros(); frames],
                vis: vec![true; frames],
            })
            .collect()
    }

    fn cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                )
            })
            .collect()
    }

    /// Tracks following `exp(xi * theta_f)` at every frame.
    fn articulated(points: &[Vector3<f64>], xi: &Twist, profile: &[f64]) -> Vec<SegmentTrack> {
        points
            .iter()
            .enumerate()
            .map(|(i, p)| SegmentTrack {
                track: Track3D {
                    id: 100 + i as u64,
                    positions: profile
                        .iter()
                        .map(|th| exp_map(xi, *th).unwrap().apply(p))
                        .collect(),
                    valid: vec![true; profile.len()],
                },
                uv: vec![Vector2::zeros(); profile.len()],
                vis: vec![true; profile.len()],
            })
            .collect()
    }

    fn transform_error(a: &RigidTransform, b: &RigidTransform) -> f64 {
        (a.to_matrix() - b.to_matrix()).amax()
    }

    #[test]
    fn two_tracks_cannot_form_a_step() {
        let tracks = static_tracks(&[Vector3::x(), Vector3::y()], 5);
        let err = build_correspondences(&tracks, 2).unwrap_err();
        assert!(matches!(err, Error::DegenerateStep { step: 0, pairs: 2 }));
    }

    #[test]
    fn counting_steps_and_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tracks = static_tracks(&cloud(&mut rng, 10), 9);
        let corr = build_correspondences(&tracks, 2).unwrap();
        assert_eq!(corr.steps.len(), 4);
        assert!(corr.steps.iter().all(|s| s.pairs.len() == 10));
        assert_eq!(corr.steps[3].from_frame, 6);
        assert_eq!(corr.steps[3].to_frame, 8);
    }

    #[test]
    fn invisible_frame_only_drops_adjacent_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut tracks = static_tracks(&cloud(&mut rng, 5), 5);
        tracks[0].vis[2] = false;
        let corr = build_correspondences(&tracks, 1).unwrap();
        let has_track0: Vec<bool> = corr
            .steps
            .iter()
            .map(|s| s.pairs.iter().any(|p| p.track == 0))
            .collect();
        assert_eq!(has_track0, vec![true, false, false, true]);
    }

    #[test]
    fn static_points_give_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tracks = static_tracks(&cloud(&mut rng, 8), 7);
        let corr = build_correspondences(&tracks, 2).unwrap();
        let est = fit_independent(&corr).unwrap();
        for t in &est.step_transforms {
            assert!(transform_error(t, &RigidTransform::identity()) < 1e-12);
        }
    }

    #[test]
    fn recovers_known_transform() {
        let g = RigidTransform::new(
            UnitQuaternion::from_scaled_axis(Vector3::z() * 20f64.to_radians()),
            Vector3::new(0.3, -0.2, 0.05),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pairs: Vec<PointPair> = cloud(&mut rng, 6)
            .into_iter()
            .enumerate()
            .map(|(i, p)| PointPair {
                track: i,
                from: p,
                to: g.apply(&p),
                weight: 1.0,
            })
            .collect();
        let t = register_rigid(&pairs).unwrap();
        assert!(transform_error(&t, &g) < 1e-9);
        let r = t.rotation_matrix();
        assert!((r.determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn coplanar_points_register_but_collinear_do_not() {
        let g = RigidTransform::new(
            UnitQuaternion::from_scaled_axis(Vector3::new(0.1, 0.4, -0.2)),
            Vector3::new(1.0, 2.0, 3.0),
        );
        let planar = [Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0), Vector3::new(1.0, 1.0, 0.0)];
        let pairs: Vec<PointPair> = planar
            .iter()
            .enumerate()
            .map(|(i, p)| PointPair { track: i, from: *p, to: g.apply(p), weight: 1.0 })
            .collect();
        assert!(transform_error(&register_rigid(&pairs).unwrap(), &g) < 1e-9);
        let line: Vec<PointPair> = (0..5)
            .map(|i| {
                let p = Vector3::new(i as f64, 2.0 * i as f64, 0.0);
                PointPair { track: i, from: p, to: g.apply(&p), weight: 1.0 }
            })
            .collect();
        assert!(register_rigid(&line).is_none());
        let tracks: Vec<SegmentTrack> = (0..4)
            .map(|i| {
                let p = Vector3::new(i as f64, 0.0, 0.0);
                SegmentTrack {
                    track: Track3D { id: i, positions: vec![p, p + Vector3::y()], valid: vec![true; 2] },
                    uv: vec![Vector2::zeros(); 2],
                    vis: vec![true; 2],
                }
            })
            .collect();
        let corr = build_correspondences(&tracks, 1).unwrap();
        assert!(matches!(fit_independent(&corr), Err(Error::DegenerateGeometry { step: 0 })));
    }

    fn door_profile(total: f64, steps: usize, stride: usize) -> Vec<f64> {
        let frames = steps * stride + 1;
        (0..frames).map(|f| total * f as f64 / (frames - 1) as f64).collect()
    }

    #[test]
    fn independent_fit_tracks_door_increments() {
        let xi = Twist::revolute(Vector3::z(), Vector3::new(0.4, 0.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let profile = door_profile(30f64.to_radians(), 15, 2);
        let tracks = articulated(&cloud(&mut rng, 50), &xi, &profile);
        let corr = build_correspondences(&tracks, 2).unwrap();
        let est = fit_independent(&corr).unwrap();
        for (m, t) in est.step_transforms.iter().enumerate() {
            let expected = profile[2 * m + 2] - profile[2 * m];
            assert!((t.angle() - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn regularized_recovers_revolute_axis() {
        let point = Vector3::new(0.4, 0.0, 0.0);
        let xi = Twist::revolute(Vector3::z(), point);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let profile = door_profile(30f64.to_radians(), 15, 2);
        let tracks = articulated(&cloud(&mut rng, 50), &xi, &profile);
        let corr = build_correspondences(&tracks, 2).unwrap();
        let est = fit_regularized(&corr).unwrap();
        assert!(est.converged);
        let tw = est.base_twist.unwrap();
        assert!((tw.omega - Vector3::z()).norm() < 1e-6);
        let axis_point = tw.omega.cross(&tw.v);
        assert!((axis_point - point).norm() < 1e-6);
        for (m, th) in est.thetas.iter().enumerate() {
            assert!((th - (profile[2 * m + 2] - profile[2 * m])).abs() < 1e-9);
        }
        for (t, th) in est.step_transforms.iter().zip(&est.thetas) {
            assert!(transform_error(t, &exp_map(&tw, *th).unwrap()) < 1e-9);
        }
        let independent = fit_independent(&corr).unwrap();
        assert!(est.cost >= independent.cost - 1e-9);
        assert!(est.cost < 1e-9);
    }

    #[test]
    fn regularized_recovers_prismatic_direction() {
        let dir = Vector3::new(1.0, 1.0, 0.0).normalize();
        let xi = Twist::prismatic(dir);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let profile = door_profile(0.3, 12, 2);
        let tracks = articulated(&cloud(&mut rng, 40), &xi, &profile);
        let corr = build_correspondences(&tracks, 2).unwrap();
        let est = fit_regularized(&corr).unwrap();
        let tw = est.base_twist.unwrap();
        assert_eq!(tw.omega, Vector3::zeros());
        assert!((tw.v - dir).norm() < 1e-6);
        assert!((est.thetas.iter().sum::<f64>() - 0.3).abs() < 1e-9);
    }

    #[test]
    fn single_step_matches_independent() {
        let g = RigidTransform::new(
            UnitQuaternion::from_scaled_axis(Vector3::new(0.05, -0.2, 0.1)),
            Vector3::new(0.1, 0.02, -0.05),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts = cloud(&mut rng, 12);
        let mut tracks = static_tracks(&pts, 2);
        for (t, p) in tracks.iter_mut().zip(&pts) {
            t.track.positions[1] = g.apply(p) + Vector3::new(rng.random_range(-1e-3..1e-3), 0.0, rng.random_range(-1e-3..1e-3));
        }
        let corr = build_correspondences(&tracks, 1).unwrap();
        let ind = fit_independent(&corr).unwrap();
        let reg = fit_regularized(&corr).unwrap();
        assert!(transform_error(&ind.step_transforms[0], &reg.step_transforms[0]) < 1e-9);
    }

    #[test]
    fn no_motion_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let tracks = static_tracks(&cloud(&mut rng, 10), 9);
        let corr = build_correspondences(&tracks, 2).unwrap();
        assert!(matches!(fit_regularized(&corr), Err(Error::InsufficientMotion(_))));
    }

    #[test]
    fn pose_integration_examples() {
        let pts = vec![vec![Vector3::new(1.0, 2.0, 3.0), Vector3::new(3.0, 2.0, 1.0)]];
        let chain = integrate_poses(&[RigidTransform::identity(); 3], &pts).unwrap();
        assert_eq!(chain.anchor.translation, Vector3::new(2.0, 2.0, 2.0));
        assert!(chain.world_poses.iter().all(|w| *w == chain.anchor));
        assert!(chain.relative_poses.iter().all(|r| transform_error(r, &RigidTransform::identity()) == 0.0));

        let step = RigidTransform::from_translation(Vector3::new(0.1, 0.0, 0.0));
        let origin = vec![vec![Vector3::zeros()]];
        let chain = integrate_poses(&[step, step], &origin).unwrap();
        assert!((chain.relative_poses[2].translation - Vector3::new(0.2, 0.0, 0.0)).norm() < 1e-15);

        let late = vec![vec![], vec![Vector3::x()]];
        let chain = integrate_poses(&[step], &late).unwrap();
        assert_eq!(chain.anchor_keyframe, 1);
    }

    #[test]
    fn revolute_trail_orbits_the_axis() {
        let point = Vector3::new(0.4, 0.0, 0.0);
        let xi = Twist::revolute(Vector3::z(), point);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let profile = door_profile(40f64.to_radians(), 10, 2);
        let tracks = articulated(&cloud(&mut rng, 30), &xi, &profile);
        let corr = build_correspondences(&tracks, 2).unwrap();
        let est = fit_regularized(&corr).unwrap();
        let c = est.chain.anchor.translation;
        let radius = |p: Vector3<f64>| {
            let d = p - point;
            (d - Vector3::z() * d.z).norm()
        };
        for rel in &est.chain.relative_poses {
            let p = rel.translation + c;
            assert!((radius(p) - radius(c)).abs() < 1e-6);
        }
    }

    #[test]
    fn canonicalize_is_a_projection() {
        let xi = Twist::new(Vector3::new(0.0, 0.0, -2.0), Vector3::new(0.3, 0.8, 0.0));
        let thetas = [0.1, 0.2, 0.05];
        let (n, th) = canonicalize(&xi, &thetas).unwrap();
        assert!(n.is_normalized(1e-15));
        assert!(th.iter().sum::<f64>() >= 0.0);
        let (n2, th2) = canonicalize(&n, &th).unwrap();
        assert_eq!(n, n2);
        assert_eq!(th, th2);
        // rescaling the candidate with inverse-scaled thetas lands on the same gauge
        let scaled: Vec<f64> = thetas.iter().map(|t| t / 3.7).collect();
        let (n3, th3) = canonicalize(&xi.scale(3.7), &scaled).unwrap();
        assert!((n3.to_vector() - n.to_vector()).amax() < 1e-15);
        for (a, b) in th3.iter().zip(&th) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn axis_moves_with_the_world() {
        let point = Vector3::new(0.4, 0.0, 0.0);
        let xi = Twist::revolute(Vector3::new(0.0, 0.3, 1.0), point);
        let g = RigidTransform::new(
            UnitQuaternion::from_scaled_axis(Vector3::new(0.3, -0.5, 0.2)),
            Vector3::new(1.0, -2.0, 0.5),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let pts = cloud(&mut rng, 30);
        let profile = door_profile(35f64.to_radians(), 10, 2);
        let base = articulated(&pts, &xi, &profile);
        let moved: Vec<SegmentTrack> = base
            .iter()
            .map(|t| {
                let mut t = t.clone();
                t.track.positions.iter_mut().for_each(|p| *p = g.apply(p));
                t
            })
            .collect();
        let a = fit_regularized(&build_correspondences(&base, 2).unwrap()).unwrap();
        let b = fit_regularized(&build_correspondences(&moved, 2).unwrap()).unwrap();
        let ta = a.base_twist.unwrap();
        let tb = b.base_twist.unwrap();
        assert!((g.rotation * ta.omega - tb.omega).norm() < 1e-6);
        let pa = g.apply(&ta.omega.cross(&ta.v));
        let pb = tb.omega.cross(&tb.v);
        let off = pa - pb;
        assert!((off - tb.omega * off.dot(&tb.omega)).norm() < 1e-6);
    }
}
