//! End-to-end processing: segments, filtering, smoothing, estimation.
//!
//! Each stage has a serializable intermediate form so the stages can run as
//! separate commands and still reproduce the one-shot result exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::{info, warn};
use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artmodel::{estimate_articulation, ArticulationRecord, ClassifierConfig, EstimateFlag, JointType};
use crate::error::{Error, ErrorReport, Result};
use crate::lie::{RigidTransform, Twist};
use crate::segmenter::{segment_signal, Segment, SegmenterConfig};
use crate::smoother::{smooth_track, SmootherConfig};
use crate::trackfilter::{self, FilterConfig, Removal, RemovalReason};
use crate::trackio::{segment_tracks, SegmentTrack, Track3D, TrackSet, DEFAULT_MAX_DEPTH};
use crate::trajest::{build_correspondences, fit, fit_independent, EstimationMode, TrajectoryEstimate};

pub const STAGE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub segmenter: SegmenterConfig,
    pub filter: FilterConfig,
    pub smoother: SmootherConfig,
    pub classifier: ClassifierConfig,
    pub stride: usize,
    pub mode: EstimationMode,
    pub max_depth: f64,
    /// Worker threads; `None` uses every logical core.
    pub jobs: Option<usize>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            segmenter: SegmenterConfig::default(),
            filter: FilterConfig::default(),
            smoother: SmootherConfig::default(),
            classifier: ClassifierConfig::default(),
            stride: 2,
            mode: EstimationMode::Regularized,
            max_depth: DEFAULT_MAX_DEPTH,
            jobs: None,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.segmenter.validate()?;
        self.filter.validate()?;
        self.smoother.validate()?;
        self.classifier.validate()?;
        if self.stride == 0 {
            return Err(Error::InvalidArgument("stride must be at least 1".into()));
        }
        if !(self.max_depth > 0.0) {
            return Err(Error::InvalidArgument(format!("max_depth must be positive, got {}", self.max_depth)));
        }
        if self.jobs == Some(0) {
            return Err(Error::InvalidArgument("jobs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Serializable [`SegmentTrack`]; positions are `null` where invalid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrack {
    pub id: u64,
    pub positions: Vec<Option<[f64; 3]>>,
    pub uv: Vec<[f64; 2]>,
    pub vis: Vec<bool>,
}

impl From<&SegmentTrack> for StageTrack {
    fn from(t: &SegmentTrack) -> Self {
        StageTrack {
            id: t.id(),
            positions: t
                .track
                .positions
                .iter()
                .zip(&t.track.valid)
                .map(|(p, ok)| ok.then(|| (*p).into()))
                .collect(),
            uv: t.uv.iter().map(|u| (*u).into()).collect(),
            vis: t.vis.clone(),
        }
    }
}

impl StageTrack {
    pub fn to_segment_track(&self) -> Result<SegmentTrack> {
        let n = self.positions.len();
        if self.uv.len() != n || self.vis.len() != n {
            return Err(Error::Validation(format!(
                "track {}: positions, uv and vis lengths differ",
                self.id
            )));
        }
        Ok(SegmentTrack {
            track: Track3D {
                id: self.id,
                positions: self
                    .positions
                    .iter()
                    .map(|p| p.map(Vector3::from).unwrap_or_else(Vector3::zeros))
                    .collect(),
                valid: self.positions.iter().map(Option::is_some).collect(),
            },
            uv: self.uv.iter().map(|u| Vector2::from(*u)).collect(),
            vis: self.vis.clone(),
        })
    }
}

/// One segment's tracks after a stage, or the reason it was dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentStage {
    pub segment: Segment,
    pub tracks: Vec<StageTrack>,
    pub removed: Vec<Removal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorReport>,
}

impl SegmentStage {
    fn failed(segment: Segment, removed: Vec<Removal>, e: &Error) -> Self {
        SegmentStage {
            segment,
            tracks: Vec::new(),
            removed,
            error: Some(e.report()),
        }
    }

    pub fn segment_tracks(&self) -> Result<Vec<SegmentTrack>> {
        self.tracks.iter().map(StageTrack::to_segment_track).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageKind {
    Filtered,
    Smoothed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFile {
    pub version: u32,
    pub stage: StageKind,
    pub segments: Vec<SegmentStage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentFailure {
    pub segment: Segment,
    pub error: ErrorReport,
}

/// Contents of a results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub version: u32,
    pub results: Vec<ArticulationRecord>,
    pub failures: Vec<SegmentFailure>,
}

/// Accepts either a full results file or a bare list of records.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Predictions {
    File(ResultsFile),
    Records(Vec<ArticulationRecord>),
}

impl Predictions {
    pub fn into_records(self) -> Vec<ArticulationRecord> {
        match self {
            Predictions::File(f) => f.results,
            Predictions::Records(r) => r,
        }
    }
}

/// Estimated part trajectory for one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub segment: Segment,
    pub mode: EstimationMode,
    pub stride: usize,
    pub twist: Option<Twist>,
    pub thetas: Vec<f64>,
    pub anchor: RigidTransform,
    pub step_transforms: Vec<RigidTransform>,
    pub world_poses: Vec<RigidTransform>,
    pub relative_poses: Vec<RigidTransform>,
    pub rms_residual: f64,
    pub per_track_residuals: BTreeMap<u64, f64>,
    pub outliers: Vec<Removal>,
}

impl TrajectoryRecord {
    fn new(segment: Segment, stride: usize, t: &TrajectoryEstimate, outliers: Vec<Removal>) -> Self {
        TrajectoryRecord {
            segment,
            mode: t.mode,
            stride,
            twist: t.base_twist,
            thetas: t.thetas.clone(),
            anchor: t.chain.anchor,
            step_transforms: t.step_transforms.clone(),
            world_poses: t.chain.world_poses.clone(),
            relative_poses: t.chain.relative_poses.clone(),
            rms_residual: t.rms_residual,
            per_track_residuals: t.per_track_residuals.clone(),
            outliers,
        }
    }
}

/// Runs `f` over `items` on a pool of `jobs` threads, keeping input order.
pub fn map_parallel<T, U, F>(items: &[T], jobs: Option<usize>, f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(&f).collect()))
}

pub fn detect_segments(set: &TrackSet, cfg: &SegmenterConfig) -> Result<Vec<Segment>> {
    cfg.validate()?;
    let segments = segment_signal(&set.hand_signal(), cfg);
    info!("{} interaction segment(s) detected", segments.len());
    Ok(segments)
}

/// Lifts the segment's tracks to the world and drops static and unreliable ones.
pub fn filter_segment(set: &TrackSet, segment: Segment, cfg: &PipelineConfig) -> SegmentStage {
    let tracks = match segment_tracks(set, segment, cfg.max_depth) {
        Ok(t) => t,
        Err(e) => return SegmentStage::failed(segment, Vec::new(), &e),
    };
    let total = tracks.len();
    let (kept, static_removed) = match trackfilter::filter_static(tracks, &cfg.filter) {
        Ok(split) => split,
        Err(e) => {
            warn!("segment [{}, {}]: {e}", segment.start, segment.end);
            return SegmentStage::failed(segment, Vec::new(), &e);
        }
    };
    let (kept, unreliable) = trackfilter::filter_unreliable(kept, &cfg.filter);
    info!(
        "segment [{}, {}]: {} tracks, {} static, {} unreliable, {} kept",
        segment.start,
        segment.end,
        total,
        static_removed.len(),
        unreliable.len(),
        kept.len()
    );
    let mut removed = trackfilter::removals(&static_removed, RemovalReason::Static);
    removed.extend(trackfilter::removals(&unreliable, RemovalReason::Unreliable));
    if kept.is_empty() {
        return SegmentStage::failed(segment, removed, &Error::EmptyResult("reliability"));
    }
    SegmentStage {
        segment,
        tracks: kept.iter().map(StageTrack::from).collect(),
        removed,
        error: None,
    }
}

pub fn filter_all(set: &TrackSet, segments: &[Segment], cfg: &PipelineConfig) -> Result<StageFile> {
    cfg.validate()?;
    set.validate()?;
    let segments = map_parallel(segments, cfg.jobs, |s| filter_segment(set, *s, cfg))?;
    Ok(StageFile {
        version: STAGE_VERSION,
        stage: StageKind::Filtered,
        segments,
    })
}

pub fn smooth_segment(stage: &SegmentStage, cfg: &SmootherConfig) -> SegmentStage {
    if stage.error.is_some() {
        return stage.clone();
    }
    let smoothed: Result<Vec<StageTrack>> = stage
        .segment_tracks()
        .and_then(|tracks| {
            tracks
                .into_iter()
                .map(|t| {
                    let track = smooth_track(&t.track, &t.vis, cfg)?;
                    Ok(StageTrack::from(&SegmentTrack { track, ..t }))
                })
                .collect()
        });
    match smoothed {
        Ok(tracks) => SegmentStage {
            tracks,
            ..stage.clone()
        },
        Err(e) => {
            warn!("segment [{}, {}]: {e}", stage.segment.start, stage.segment.end);
            SegmentStage::failed(stage.segment, stage.removed.clone(), &e)
        }
    }
}

pub fn smooth_all(stage: &StageFile, cfg: &PipelineConfig) -> Result<StageFile> {
    cfg.validate()?;
    if stage.version != STAGE_VERSION {
        return Err(Error::Validation(format!("version: unsupported stage file version {}", stage.version)));
    }
    let segments = map_parallel(&stage.segments, cfg.jobs, |s| smooth_segment(s, &cfg.smoother))?;
    Ok(StageFile {
        version: STAGE_VERSION,
        stage: StageKind::Smoothed,
        segments,
    })
}

/// Outcome of estimating one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentEstimate {
    pub segment: Segment,
    pub outcome: std::result::Result<(ArticulationRecord, TrajectoryRecord), ErrorReport>,
}

/// Registration, optional outlier rejection, trajectory fit and joint model.
pub fn estimate_tracks(
    segment: Segment,
    tracks: Vec<SegmentTrack>,
    cfg: &PipelineConfig,
) -> Result<(ArticulationRecord, TrajectoryRecord)> {
    let mut corr = build_correspondences(&tracks, cfg.stride)?;
    let mut outliers = Vec::new();
    if cfg.filter.outlier_filter {
        let first = fit_independent(&corr)?;
        let (kept, removed) = trackfilter::filter_outliers(tracks, &first.per_track_residuals, &cfg.filter)?;
        info!(
            "segment [{}, {}]: {} outlier track(s) removed",
            segment.start,
            segment.end,
            removed.len()
        );
        if !removed.is_empty() {
            corr = build_correspondences(&kept, cfg.stride)?;
        }
        outliers = trackfilter::removals(&removed, RemovalReason::Outlier);
    }
    let traj = fit(&corr, cfg.mode)?;
    let mut est = estimate_articulation(&traj.chain.relative_poses, &traj.chain.anchor, &cfg.classifier)?;
    if !traj.converged && !est.flags.contains(&EstimateFlag::NonConverged) {
        est.flags.push(EstimateFlag::NonConverged);
    }
    if traj.chain.anchor_keyframe > 0 {
        est.flags.push(EstimateFlag::AnchorFallback);
    }
    est.flags.sort();
    Ok((
        ArticulationRecord::new(segment, &est),
        TrajectoryRecord::new(segment, cfg.stride, &traj, outliers),
    ))
}

pub fn estimate_segment(stage: &SegmentStage, cfg: &PipelineConfig) -> SegmentEstimate {
    let outcome = match &stage.error {
        Some(e) => Err(e.clone()),
        None => stage
            .segment_tracks()
            .and_then(|tracks| estimate_tracks(stage.segment, tracks, cfg))
            .map_err(|e| {
                warn!("segment [{}, {}]: {e}", stage.segment.start, stage.segment.end);
                e.report()
            }),
    };
    SegmentEstimate {
        segment: stage.segment,
        outcome,
    }
}

/// Results and trajectories of a full run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub results: ResultsFile,
    pub trajectories: Vec<TrajectoryRecord>,
}

fn collect(estimates: Vec<SegmentEstimate>) -> RunOutput {
    let mut results = Vec::new();
    let mut failures = Vec::new();
    let mut trajectories = Vec::new();
    for e in estimates {
        match e.outcome {
            Ok((rec, traj)) => {
                results.push(rec);
                trajectories.push(traj);
            }
            Err(error) => failures.push(SegmentFailure {
                segment: e.segment,
                error,
            }),
        }
    }
    info!("{} segment(s) estimated, {} failed", results.len(), failures.len());
    RunOutput {
        results: ResultsFile {
            version: STAGE_VERSION,
            results,
            failures,
        },
        trajectories,
    }
}

pub fn estimate_all(stage: &StageFile, cfg: &PipelineConfig) -> Result<RunOutput> {
    cfg.validate()?;
    if stage.version != STAGE_VERSION {
        return Err(Error::Validation(format!("version: unsupported stage file version {}", stage.version)));
    }
    if stage.stage != StageKind::Smoothed {
        warn!("estimating from an unsmoothed stage file");
    }
    let estimates = map_parallel(&stage.segments, cfg.jobs, |s| estimate_segment(s, cfg))?;
    Ok(collect(estimates))
}

/// Full pipeline on a track set.
pub fn run(set: &TrackSet, cfg: &PipelineConfig) -> Result<RunOutput> {
    cfg.validate()?;
    set.validate()?;
    let segments = detect_segments(set, &cfg.segmenter)?;
    let estimates = map_parallel(&segments, cfg.jobs, |s| {
        let filtered = filter_segment(set, *s, cfg);
        let smoothed = smooth_segment(&filtered, &cfg.smoother);
        estimate_segment(&smoothed, cfg)
    })?;
    Ok(collect(estimates))
}

/// ASCII PLY with the pose trail as points and the axis as a single edge.
pub fn trajectory_ply(rec: &ArticulationRecord, traj: &TrajectoryRecord) -> String {
    let trail: Vec<Vector3<f64>> = traj.world_poses.iter().map(|p| p.translation).collect();
    let dir = Vector3::from(rec.axis_dir);
    let (a, b) = match (rec.joint_type, rec.axis_point_near_anchor) {
        (JointType::Revolute, Some(p)) => {
            let p = Vector3::from(p);
            (p - dir * 0.5, p + dir * 0.5)
        }
        _ => {
            let c = traj.anchor.translation;
            let travel = rec.thetas.iter().cloned().fold(0.0f64, |m, x| m.max(x.abs())).max(0.1);
            (c, c + dir * travel)
        }
    };
    let mut out = String::new();
    let _ = writeln!(out, "ply\nformat ascii 1.0");
    let _ = writeln!(out, "comment segment {} {} {}", rec.segment.start, rec.segment.end, rec.joint_type);
    let _ = writeln!(out, "element vertex {}", trail.len() + 2);
    let _ = writeln!(out, "property float x\nproperty float y\nproperty float z");
    let _ = writeln!(out, "property uchar red\nproperty uchar green\nproperty uchar blue");
    let _ = writeln!(out, "element edge 1\nproperty int vertex1\nproperty int vertex2\nend_header");
    for p in &trail {
        let _ = writeln!(out, "{} {} {} 40 120 255", p.x, p.y, p.z);
    }
    for p in [a, b] {
        let _ = writeln!(out, "{} {} {} 255 60 40", p.x, p.y, p.z);
    }
    let _ = writeln!(out, "{} {}", trail.len(), trail.len() + 1);
    out
}

/// Writes one `segment_<start>_<end>.ply` per estimated segment.
pub fn export_ply(dir: &Path, out: &RunOutput) -> Result<()> {
    let io = |e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    };
    fs::create_dir_all(dir).map_err(io)?;
    for (rec, traj) in out.results.results.iter().zip(&out.trajectories) {
        let path = dir.join(format!("segment_{}_{}.ply", rec.segment.start, rec.segment.end));
        fs::write(&path, trajectory_ply(rec, traj)).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
    }
    Ok(())
}
