//! Track files, pinhole lifting and camera-to-world transformation.
//!
//! A track file holds the camera intrinsics, one record per frame (camera
//! pose and hand-detection flag), and a list of 2D point tracks with depth
//! and visibility. Missing depth is encoded as `null`.

use std::fs;
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::RigidTransform;
use crate::segmenter::Segment;

pub const FORMAT_VERSION: u32 = 1;

/// Depths beyond this range (meters) are treated as invalid.
pub const DEFAULT_MAX_DEPTH: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|x| x.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::Validation(format!(
                "intrinsics: focal lengths must be positive and all values finite, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Projects a camera-frame point to pixels. The point must be in front of the camera.
    pub fn project(&self, p: &Vector3<f64>) -> Vector2<f64> {
        Vector2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }
}

/// Back-projects a pixel with metric depth into the camera frame. Returns
/// `None` when the depth is non-finite, non-positive or beyond `max_depth`.
pub fn lift_to_3d(
    uv: &Vector2<f64>,
    depth: f64,
    k: &CameraIntrinsics,
    max_depth: f64,
) -> Option<Vector3<f64>> {
    if !depth.is_finite() || depth <= 0.0 || depth > max_depth {
        return None;
    }
    Some(Vector3::new(
        (uv.x - k.cx) * depth / k.fx,
        (uv.y - k.cy) * depth / k.fy,
        depth,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub length: String,
}

impl Default for Units {
    fn default() -> Self {
        Units {
            length: "m".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t: i64,
    /// Camera-to-world.
    pub cam_pose: RigidTransform,
    pub hand: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: u64,
    pub uv: Vec<[f64; 2]>,
    pub depth: Vec<Option<f64>>,
    pub vis: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSet {
    pub version: u32,
    pub units: Units,
    pub intrinsics: CameraIntrinsics,
    pub frames: Vec<Frame>,
    pub tracks: Vec<Track>,
}

impl TrackSet {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn hand_signal(&self) -> Vec<bool> {
        self.frames.iter().map(|f| f.hand).collect()
    }

    pub fn camera_poses(&self) -> Vec<RigidTransform> {
        self.frames.iter().map(|f| f.cam_pose).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != FORMAT_VERSION {
            return Err(Error::Validation(format!(
                "version: unsupported track file version {}",
                self.version
            )));
        }
        if self.units.length != "m" {
            return Err(Error::Validation(format!(
                "units.length: expected \"m\", got {:?}",
                self.units.length
            )));
        }
        self.intrinsics.validate()?;
        for (i, w) in self.frames.windows(2).enumerate() {
            if w[1].t <= w[0].t {
                return Err(Error::Validation(format!(
                    "frames[{}].t: frame stamps must be strictly increasing",
                    i + 1
                )));
            }
        }
        let n = self.frames.len();
        let mut ids = std::collections::BTreeSet::new();
        for (i, tr) in self.tracks.iter().enumerate() {
            if !ids.insert(tr.id) {
                return Err(Error::Validation(format!("tracks[{i}].id: duplicate id {}", tr.id)));
            }
            for (field, len) in [("uv", tr.uv.len()), ("depth", tr.depth.len()), ("vis", tr.vis.len())] {
                if len != n {
                    return Err(Error::Validation(format!(
                        "tracks[{i}].{field}: length {len} does not match frame count {n}"
                    )));
                }
            }
            for t in 0..n {
                if !tr.vis[t] {
                    continue;
                }
                match tr.depth[t] {
                    Some(z) if z.is_finite() && z > 0.0 => {}
                    other => {
                        return Err(Error::Validation(format!(
                            "tracks[{i}].depth[{t}]: visible sample needs a positive depth, got {other:?}"
                        )))
                    }
                }
                if tr.uv[t].iter().any(|x| !x.is_finite()) {
                    return Err(Error::Validation(format!("tracks[{i}].uv[{t}]: not finite")));
                }
            }
        }
        Ok(())
    }
}

/// A track's positions with per-frame validity.
#[derive(Debug, Clone, PartialEq)]
pub struct Track3D {
    pub id: u64,
    pub positions: Vec<Vector3<f64>>,
    pub valid: Vec<bool>,
}

impl Track3D {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// One track restricted to a segment: world positions, pixels, and the
/// observation mask (visible with valid depth). The mask survives smoothing.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentTrack {
    pub track: Track3D,
    pub uv: Vec<Vector2<f64>>,
    pub vis: Vec<bool>,
}

impl SegmentTrack {
    pub fn id(&self) -> u64 {
        self.track.id
    }

    pub fn len(&self) -> usize {
        self.vis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vis.is_empty()
    }
}

/// Moves camera-frame positions into the world frame, frame by frame.
pub fn to_world(track: &Track3D, poses: &[RigidTransform]) -> Result<Track3D> {
    if poses.len() != track.positions.len() {
        return Err(Error::InvalidArgument(format!(
            "to_world: {} poses for {} frames",
            poses.len(),
            track.positions.len()
        )));
    }
    Ok(Track3D {
        id: track.id,
        positions: track
            .positions
            .iter()
            .zip(poses)
            .map(|(p, pose)| pose.apply(p))
            .collect(),
        valid: track.valid.clone(),
    })
}

/// Camera-frame lift of one track over `segment`; invalid samples are zero.
pub fn lift_track(
    track: &Track,
    k: &CameraIntrinsics,
    segment: Segment,
    max_depth: f64,
) -> Track3D {
    let mut positions = Vec::with_capacity(segment.len());
    let mut valid = Vec::with_capacity(segment.len());
    for t in segment.start..=segment.end {
        let uv = Vector2::from(track.uv[t]);
        let lifted = if track.vis[t] {
            lift_to_3d(&uv, track.depth[t].unwrap_or(f64::NAN), k, max_depth)
        } else {
            None
        };
        valid.push(lifted.is_some());
        positions.push(lifted.unwrap_or_else(Vector3::zeros));
    }
    Track3D {
        id: track.id,
        positions,
        valid,
    }
}

/// Lifts every track over `segment` and expresses it in the world frame.
pub fn segment_tracks(set: &TrackSet, segment: Segment, max_depth: f64) -> Result<Vec<SegmentTrack>> {
    if segment.end >= set.frame_count() {
        return Err(Error::InvalidArgument(format!(
            "segment [{}, {}] exceeds {} frames",
            segment.start,
            segment.end,
            set.frame_count()
        )));
    }
    let poses: Vec<RigidTransform> = set.frames[segment.start..=segment.end]
        .iter()
        .map(|f| f.cam_pose)
        .collect();
    set.tracks
        .iter()
        .map(|tr| {
            let cam = lift_track(tr, &set.intrinsics, segment, max_depth);
            let mut world = to_world(&cam, &poses)?;
            for (p, ok) in world.positions.iter_mut().zip(&world.valid) {
                if !ok {
                    *p = Vector3::zeros();
                }
            }
            Ok(SegmentTrack {
                vis: world.valid.clone(),
                uv: tr.uv[segment.start..=segment.end]
                    .iter()
                    .map(|uv| Vector2::from(*uv))
                    .collect(),
                track: world,
            })
        })
        .collect()
}

/// Parses JSON, reporting the path of the offending field on failure.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_json(&text)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = to_json_string(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::InvalidArgument(e.to_string()))
}

pub fn parse_trackset(text: &str) -> Result<TrackSet> {
    let set: TrackSet = parse_json(text)?;
    set.validate()?;
    Ok(set)
}

pub fn load_trackset(path: &Path) -> Result<TrackSet> {
    let set: TrackSet = read_json(path)?;
    set.validate()?;
    Ok(set)
}

pub fn save_trackset(path: &Path, set: &TrackSet) -> Result<()> {
    write_json(path, set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;
    use proptest::prelude::*;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics {
            fx: 525.0,
            fy: 520.0,
            cx: 320.0,
            cy: 240.0,
        }
    }

    #[test]
    fn lift_examples() {
        let k = k();
        let p = lift_to_3d(&Vector2::new(k.cx, k.cy), 2.0, &k, DEFAULT_MAX_DEPTH).unwrap();
        assert_eq!(p, Vector3::new(0.0, 0.0, 2.0));
        let p = lift_to_3d(&Vector2::new(k.cx + k.fx, k.cy), 1.0, &k, DEFAULT_MAX_DEPTH).unwrap();
        assert_eq!(p, Vector3::new(1.0, 0.0, 1.0));
        let uv = Vector2::new(320.0, 240.0);
        assert!(lift_to_3d(&uv, f64::NAN, &k, DEFAULT_MAX_DEPTH).is_none());
        assert!(lift_to_3d(&uv, 0.0, &k, DEFAULT_MAX_DEPTH).is_none());
        assert!(lift_to_3d(&uv, -1.0, &k, DEFAULT_MAX_DEPTH).is_none());
        assert!(lift_to_3d(&uv, 10.5, &k, DEFAULT_MAX_DEPTH).is_none());
        assert!(lift_to_3d(&uv, 10.5, &k, 20.0).is_some());
    }

    #[test]
    fn to_world_examples() {
        let track = Track3D {
            id: 0,
            positions: vec![Vector3::new(1.0, 2.0, 3.0), Vector3::new(-1.0, 0.5, 2.0)],
            valid: vec![true, false],
        };
        let same = to_world(&track, &[RigidTransform::identity(); 2]).unwrap();
        assert_eq!(same, track);
        let shift = RigidTransform::from_translation(Vector3::new(0.0, 0.0, 1.0));
        let moved = to_world(&track, &[shift; 2]).unwrap();
        for (a, b) in moved.positions.iter().zip(&track.positions) {
            assert_eq!(a - b, Vector3::new(0.0, 0.0, 1.0));
        }
        assert_eq!(moved.valid, track.valid);
        assert!(matches!(to_world(&track, &[shift]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn static_point_from_moving_camera() {
        let k = k();
        let world = Vector3::new(0.2, -0.1, 0.3);
        let poses: Vec<RigidTransform> = (0..10)
            .map(|i| {
                let a = i as f64 * 0.03;
                RigidTransform::new(
                    UnitQuaternion::from_scaled_axis(Vector3::new(0.0, a, 0.01 * a)),
                    Vector3::new(0.05 * a, 0.0, -2.0 + 0.1 * a),
                )
            })
            .collect();
        let mut cam = Track3D {
            id: 1,
            positions: vec![],
            valid: vec![],
        };
        for pose in &poses {
            let pc = pose.inverse().apply(&world);
            let uv = k.project(&pc);
            cam.positions.push(lift_to_3d(&uv, pc.z, &k, DEFAULT_MAX_DEPTH).unwrap());
            cam.valid.push(true);
        }
        let w = to_world(&cam, &poses).unwrap();
        for p in &w.positions {
            assert!((p - world).norm() < 1e-9);
        }
    }

    fn minimal_json() -> &'static str {
        r#"{
  "version": 1,
  "units": {
    "length": "m"
  },
  "intrinsics": {
    "fx": 500.0,
    "fy": 500.0,
    "cx": 320.0,
    "cy": 240.0
  },
  "frames": [
    {
      "t": 0,
      "cam_pose": {
        "q": [
          1.0,
          0.0,
          0.0,
          0.0
        ],
        "t": [
          0.0,
          0.0,
          0.0
        ]
      },
      "hand": false
    },
    {
      "t": 1,
      "cam_pose": {
        "q": [
          1.0,
          0.0,
          0.0,
          0.0
        ],
        "t": [
          0.0,
          0.0,
          0.1
        ]
      },
      "hand": true
    }
  ],
  "tracks": [
    {
      "id": 7,
      "uv": [
        [
          300.0,
          200.0
        ],
        [
          301.5,
          200.25
        ]
      ],
      "depth": [
        1.5,
        null
      ],
      "vis": [
        true,
        false
      ]
    }
  ]
}"#
    }

    #[test]
    fn minimal_file_round_trips() {
        let set = parse_trackset(minimal_json()).unwrap();
        assert_eq!(set.frame_count(), 2);
        assert_eq!(set.tracks[0].depth[1], None);
        assert_eq!(to_json_string(&set).unwrap(), minimal_json());
    }

    #[test]
    fn visible_sample_without_depth_is_rejected() {
        let text = minimal_json().replacen("false\n      ]", "true\n      ]", 1);
        let err = parse_trackset(&text).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("tracks[0].depth[1]")), "{err}");
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let text = minimal_json().replace("1.5,\n        null", "1.5");
        let err = parse_trackset(&text).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("tracks[0].depth")), "{err}");
    }

    #[test]
    fn schema_error_names_the_field() {
        let text = minimal_json().replace("\"hand\": true", "\"hand\": 3");
        match parse_trackset(&text).unwrap_err() {
            Error::Parse { path, .. } => assert_eq!(path, "frames[1].hand"),
            e => panic!("unexpected {e}"),
        }
        assert!(matches!(parse_trackset("{not json"), Err(Error::Parse { .. })));
    }

    proptest! {
        #[test]
        fn projection_round_trip(u in 0.0f64..640.0, v in 0.0f64..480.0, z in 0.1f64..9.9) {
            let k = k();
            let p = lift_to_3d(&Vector2::new(u, v), z, &k, DEFAULT_MAX_DEPTH).unwrap();
            let back = k.project(&p);
            prop_assert!((back - Vector2::new(u, v)).norm() < 1e-9);
        }

        #[test]
        fn world_transform_is_rigid(
            pts in prop::collection::vec(prop::array::uniform3(-3.0f64..3.0), 2..6),
            axis in prop::array::uniform3(-1.0f64..1.0),
            t in prop::array::uniform3(-5.0f64..5.0),
        ) {
            let pose = RigidTransform::new(
                UnitQuaternion::from_scaled_axis(Vector3::from(axis)),
                Vector3::from(t),
            );
            let track = Track3D {
                id: 0,
                positions: pts.iter().map(|p| Vector3::from(*p)).collect(),
                valid: vec![true; pts.len()],
            };
            let w = to_world(&track, &vec![pose; pts.len()]).unwrap();
            for i in 0..pts.len() {
                for j in 0..pts.len() {
                    let before = (track.positions[i] - track.positions[j]).norm();
                    let after = (w.positions[i] - w.positions[j]).norm();
                    prop_assert!((before - after).abs() < 1e-9);
                }
            }
        }
    }
}
