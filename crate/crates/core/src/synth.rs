//! Synthetic articulated scenes with exact ground truth.
//!
//! A rigid part moves about a scripted joint while background points stay
//! put. Every point is observed through a moving pinhole camera, with
//! optional noise, random occlusion and dropped depth. Generation is fully
//! determined by the seed.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::artmodel::JointType;
use crate::error::{Error, Result};
use crate::evalkit::GroundTruthRecord;
use crate::lie::{exp_map, RigidTransform, Twist};
use crate::segmenter::Segment;
use crate::trackio::{CameraIntrinsics, Frame, Track, TrackSet, Units, FORMAT_VERSION};

/// Points closer than this to the image plane count as not visible.
const MIN_CAMERA_DEPTH: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    /// Isotropic noise on the world point, in meters.
    #[default]
    World3d,
    /// Isotropic noise on the pixel coordinates, in pixels.
    Pixel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    #[serde(rename = "type")]
    pub joint_type: JointType,
    pub axis_dir: [f64; 3],
    /// Ignored for prismatic joints.
    pub axis_point: [f64; 3],
    /// Joint configuration per frame (rad or m).
    pub motion_profile: Vec<f64>,
}

impl JointSpec {
    pub fn twist(&self) -> Result<Twist> {
        let d = Vector3::from(self.axis_dir);
        if !(d.norm() > 0.0) || !d.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidArgument("joint.axis_dir must be nonzero".into()));
        }
        let d = d.normalize();
        Ok(match self.joint_type {
            JointType::Revolute => Twist::revolute(d, Vector3::from(self.axis_point)),
            JointType::Prismatic => Twist::prismatic(d),
        })
    }
}

/// Axis-aligned box that points are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointRegion {
    pub center: [f64; 3],
    pub half_extent: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub frames: usize,
    pub intrinsics: CameraIntrinsics,
    pub joint: JointSpec,
    /// Windows with the hand flag raised; each is one ground-truth interaction.
    pub interactions: Vec<Segment>,
    pub n_dynamic: usize,
    pub n_static: usize,
    pub part: PointRegion,
    pub background: PointRegion,
    /// Camera-to-world, one per frame.
    pub camera_path: Vec<RigidTransform>,
    pub noise_sigma: f64,
    #[serde(default)]
    pub noise_mode: NoiseMode,
    pub occlusion_rate: f64,
    pub invalid_depth_rate: f64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n_dynamic == 0 {
            return bad("scene needs at least one dynamic point".into());
        }
        if self.frames == 0 {
            return bad("scene needs at least one frame".into());
        }
        if self.joint.motion_profile.len() != self.frames {
            return bad(format!(
                "joint.motion_profile has {} entries for {} frames",
                self.joint.motion_profile.len(),
                self.frames
            ));
        }
        if self.camera_path.len() != self.frames {
            return bad(format!(
                "camera_path has {} poses for {} frames",
                self.camera_path.len(),
                self.frames
            ));
        }
        for w in &self.interactions {
            if w.end >= self.frames || w.start > w.end {
                return bad(format!("interaction {w:?} outside {} frames", self.frames));
            }
        }
        for (name, r) in [("occlusion_rate", self.occlusion_rate), ("invalid_depth_rate", self.invalid_depth_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("{name} must lie in [0, 1], got {r}"));
            }
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return bad(format!("noise_sigma must be non-negative, got {}", self.noise_sigma));
        }
        if self.joint.motion_profile.iter().any(|x| !x.is_finite()) {
            return bad("joint.motion_profile must be finite".into());
        }
        self.intrinsics.validate()?;
        self.joint.twist()?;
        Ok(())
    }
}

/// Generated scene: the track file, its ground truth, and which track ids
/// belong to the moving part.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub tracks: TrackSet,
    pub ground_truth: Vec<GroundTruthRecord>,
    pub dynamic_ids: Vec<u64>,
}

fn sample_box(rng: &mut ChaCha8Rng, region: &PointRegion) -> Vector3<f64> {
    Vector3::from_fn(|i, _| {
        let h = region.half_extent[i];
        region.center[i] + if h > 0.0 { rng.random_range(-h..=h) } else { 0.0 }
    })
}

/// Renders the scene. Dynamic tracks get ids `0..n_dynamic`, static ones follow.
pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let twist = cfg.joint.twist()?;
    let motions: Vec<RigidTransform> = cfg
        .joint
        .motion_profile
        .iter()
        .map(|th| exp_map(&twist, *th))
        .collect::<Result<_>>()?;
    let world_to_cam: Vec<RigidTransform> = cfg.camera_path.iter().map(|c| c.inverse()).collect();

    let mut rest: Vec<(Vector3<f64>, bool)> = Vec::with_capacity(cfg.n_dynamic + cfg.n_static);
    for _ in 0..cfg.n_dynamic {
        rest.push((sample_box(&mut rng, &cfg.part), true));
    }
    for _ in 0..cfg.n_static {
        rest.push((sample_box(&mut rng, &cfg.background), false));
    }

    let noise = Normal::new(0.0, cfg.noise_sigma)
        .map_err(|e| Error::InvalidArgument(format!("noise_sigma: {e}")))?;
    let k = &cfg.intrinsics;
    let mut tracks = Vec::with_capacity(rest.len());
    for (id, (x0, dynamic)) in rest.iter().enumerate() {
        let mut track = Track {
            id: id as u64,
            uv: Vec::with_capacity(cfg.frames),
            depth: Vec::with_capacity(cfg.frames),
            vis: Vec::with_capacity(cfg.frames),
        };
        for t in 0..cfg.frames {
            let mut x = if *dynamic { motions[t].apply(x0) } else { *x0 };
            let mut jitter = Vector3::zeros();
            if cfg.noise_sigma > 0.0 {
                jitter = Vector3::from_fn(|_, _| noise.sample(&mut rng));
            }
            if cfg.noise_mode == NoiseMode::World3d {
                x += jitter;
            }
            let occluded = rng.random::<f64>() < cfg.occlusion_rate;
            let no_depth = rng.random::<f64>() < cfg.invalid_depth_rate;
            let c = world_to_cam[t].apply(&x);
            if c.z < MIN_CAMERA_DEPTH {
                track.uv.push([k.cx, k.cy]);
                track.depth.push(None);
                track.vis.push(false);
                continue;
            }
            let mut uv = k.project(&c);
            if cfg.noise_mode == NoiseMode::Pixel {
                uv += jitter.xy();
            }
            track.uv.push(uv.into());
            track.depth.push(if no_depth { None } else { Some(c.z) });
            track.vis.push(!occluded && !no_depth);
        }
        tracks.push(track);
    }

    let frames = (0..cfg.frames)
        .map(|t| Frame {
            t: t as i64,
            cam_pose: cfg.camera_path[t],
            hand: cfg.interactions.iter().any(|w| t >= w.start && t <= w.end),
        })
        .collect();
    let dir = Vector3::from(cfg.joint.axis_dir).normalize();
    let ground_truth = cfg
        .interactions
        .iter()
        .map(|w| GroundTruthRecord {
            segment: *w,
            joint_type: cfg.joint.joint_type,
            axis_dir: dir.into(),
            axis_point: match cfg.joint.joint_type {
                JointType::Revolute => Some(cfg.joint.axis_point),
                JointType::Prismatic => None,
            },
            difficulty: None,
        })
        .collect();
    Ok(SynthOutput {
        tracks: TrackSet {
            version: FORMAT_VERSION,
            units: Units::default(),
            intrinsics: *k,
            frames,
            tracks,
        },
        ground_truth,
        dynamic_ids: (0..cfg.n_dynamic as u64).collect(),
    })
}

/// Camera-to-world pose at `eye` looking at `target`, with the image y axis
/// pointing away from world `up`.
pub fn look_at(eye: &Vector3<f64>, target: &Vector3<f64>, up: &Vector3<f64>) -> RigidTransform {
    let f = (target - eye).normalize();
    let mut r = f.cross(up);
    if r.norm() < 1e-9 {
        r = f.cross(&Vector3::x());
        if r.norm() < 1e-9 {
            r = f.cross(&Vector3::y());
        }
    }
    let r = r.normalize();
    let d = f.cross(&r);
    RigidTransform::from_rotation_matrix(&Matrix3::from_columns(&[r, d, f]), *eye)
}

/// Zero before `window.start`, linear up to `total` at `window.end`, then held.
pub fn ramp_profile(frames: usize, window: Segment, total: f64) -> Vec<f64> {
    let span = window.end.saturating_sub(window.start).max(1) as f64;
    (0..frames)
        .map(|t| {
            if t <= window.start {
                0.0
            } else if t >= window.end {
                total
            } else {
                total * (t - window.start) as f64 / span
            }
        })
        .collect()
}

/// Camera circling `target` on a horizontal arc of `sweep` radians.
pub fn orbit_path(
    frames: usize,
    target: &Vector3<f64>,
    radius: f64,
    height: f64,
    start_angle: f64,
    sweep: f64,
) -> Vec<RigidTransform> {
    (0..frames)
        .map(|t| {
            let s = if frames > 1 { t as f64 / (frames - 1) as f64 } else { 0.0 };
            let a = start_angle + sweep * s;
            let eye = target + Vector3::new(radius * a.cos(), radius * a.sin(), height);
            look_at(&eye, target, &Vector3::z())
        })
        .collect()
}

/// Two unit vectors completing `d` to an orthonormal frame.
fn perpendicular_pair(d: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if d.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let u = d.cross(&helper).normalize();
    (u, d.cross(&u))
}

/// Parameters of the standard benchmark scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub joint_type: JointType,
    pub axis_dir: Vector3<f64>,
    pub axis_point: Vector3<f64>,
    /// Total rotation (rad) or travel (m) over the interaction.
    pub magnitude: f64,
    pub n_dynamic: usize,
    pub n_static: usize,
    pub noise_sigma: f64,
    pub occlusion_rate: f64,
    pub invalid_depth_rate: f64,
    pub moving_camera: bool,
}

impl SceneSpec {
    pub fn new(joint_type: JointType, axis_dir: Vector3<f64>, magnitude: f64) -> Self {
        SceneSpec {
            seed: 0,
            joint_type,
            axis_dir,
            axis_point: Vector3::zeros(),
            magnitude,
            n_dynamic: 70,
            n_static: 30,
            noise_sigma: 0.0,
            occlusion_rate: 0.0,
            invalid_depth_rate: 0.0,
            moving_camera: true,
        }
    }
}

/// 120 frames, interaction over frames 20..=79, part about 0.4 m off the
/// axis (revolute) or centered on the axis point (prismatic), background
/// around the part, camera about 2 m away.
pub fn standard_scene(spec: &SceneSpec) -> SynthConfig {
    const FRAMES: usize = 120;
    let interaction = Segment::new(20, 79);
    let d = spec.axis_dir.normalize();
    let (u, w) = perpendicular_pair(&d);
    let part_center = match spec.joint_type {
        JointType::Revolute => spec.axis_point + u * 0.4,
        JointType::Prismatic => spec.axis_point,
    };
    let bg_center = part_center + w * 0.6;
    let target = part_center;
    let camera_path = if spec.moving_camera {
        orbit_path(FRAMES, &target, 2.0, 0.8, 0.3, 0.5)
    } else {
        vec![look_at(&(target + Vector3::new(2.0, 0.0, 0.8)), &target, &Vector3::z()); FRAMES]
    };
    SynthConfig {
        seed: spec.seed,
        frames: FRAMES,
        intrinsics: CameraIntrinsics {
            fx: 525.0,
            fy: 525.0,
            cx: 319.5,
            cy: 239.5,
        },
        joint: JointSpec {
            joint_type: spec.joint_type,
            axis_dir: d.into(),
            axis_point: spec.axis_point.into(),
            motion_profile: ramp_profile(FRAMES, interaction, spec.magnitude),
        },
        interactions: vec![interaction],
        n_dynamic: spec.n_dynamic,
        n_static: spec.n_static,
        part: PointRegion {
            center: part_center.into(),
            half_extent: [0.25; 3],
        },
        background: PointRegion {
            center: bg_center.into(),
            half_extent: [0.5, 0.5, 0.3],
        },
        camera_path,
        noise_sigma: spec.noise_sigma,
        noise_mode: NoiseMode::World3d,
        occlusion_rate: spec.occlusion_rate,
        invalid_depth_rate: spec.invalid_depth_rate,
    }
}

/// `n` nearly uniform unit vectors.
pub fn fibonacci_sphere(n: usize) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let a = golden * i as f64;
            Vector3::new(r * a.cos(), r * a.sin(), z)
        })
        .collect()
}
