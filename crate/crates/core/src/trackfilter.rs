//! Track rejection: static background, unreliable (mostly occluded) tracks,
//! and registration outliers.
//!
//! Every filter returns `(kept, removed)` preserving input order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trackio::SegmentTrack;

/// Registration needs three tracks; one more is kept as margin.
pub const MIN_TRACKS: usize = 4;

/// Floor on the median absolute deviation of track residuals.
pub const MAD_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StaticMode {
    /// Pixel-space motion.
    Image2d,
    /// World-frame motion in meters.
    World3d,
}

impl std::str::FromStr for StaticMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "image2d" => Ok(StaticMode::Image2d),
            "world3d" => Ok(StaticMode::World3d),
            other => Err(format!("unknown static mode {other:?} (image2d | world3d)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// Percentile in `[0, 100]` of the motion scores below which tracks are static.
    pub sigma_static: f64,
    pub static_mode: StaticMode,
    /// Largest tolerated fraction of invisible frames.
    pub sigma_reliable: f64,
    /// MAD multiplier for the outlier bound.
    pub outlier_k: f64,
    pub outlier_filter: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            sigma_static: 50.0,
            static_mode: StaticMode::Image2d,
            sigma_reliable: 0.5,
            outlier_k: 3.0,
            outlier_filter: true,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=100.0).contains(&self.sigma_static) {
            return Err(Error::InvalidArgument(format!(
                "sigma_static must be a percentile in [0, 100], got {}",
                self.sigma_static
            )));
        }
        if !(0.0..=1.0).contains(&self.sigma_reliable) {
            return Err(Error::InvalidArgument(format!(
                "sigma_reliable must lie in [0, 1], got {}",
                self.sigma_reliable
            )));
        }
        if !(self.outlier_k > 0.0) || !self.outlier_k.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "outlier_k must be positive, got {}",
                self.outlier_k
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RemovalReason {
    Static,
    Unreliable,
    Outlier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub id: u64,
    pub reason: RemovalReason,
}

pub type Split = (Vec<SegmentTrack>, Vec<SegmentTrack>);

fn split_by(tracks: Vec<SegmentTrack>, remove: &[bool]) -> Split {
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for (t, r) in tracks.into_iter().zip(remove) {
        if *r {
            removed.push(t);
        } else {
            kept.push(t);
        }
    }
    (kept, removed)
}

/// Sum of per-axis population variances over visible frames.
pub fn motion_score(track: &SegmentTrack, mode: StaticMode) -> f64 {
    let samples: Vec<[f64; 3]> = (0..track.len())
        .filter(|&t| track.vis[t])
        .map(|t| match mode {
            StaticMode::Image2d => [track.uv[t].x, track.uv[t].y, 0.0],
            StaticMode::World3d => track.track.positions[t].into(),
        })
        .collect();
    if samples.len() < 2 {
        return 0.0;
    }
    let n = samples.len() as f64;
    (0..3)
        .map(|axis| {
            let mean = samples.iter().map(|s| s[axis]).sum::<f64>() / n;
            samples.iter().map(|s| (s[axis] - mean).powi(2)).sum::<f64>() / n
        })
        .sum()
}

/// Drops the lowest-motion tracks.
///
/// Below the 100th percentile, the `floor(p * n / 100)` tracks with the
/// smallest scores are removed, ties going to the earlier track. At 100,
/// every track scoring below the maximum is removed.
pub fn filter_static(tracks: Vec<SegmentTrack>, cfg: &FilterConfig) -> Result<Split> {
    let n = tracks.len();
    if n == 0 {
        return Err(Error::InvalidArgument("static filter needs at least one track".into()));
    }
    let scores: Vec<f64> = tracks.iter().map(|t| motion_score(t, cfg.static_mode)).collect();
    let mut remove = vec![false; n];
    if cfg.sigma_static >= 100.0 {
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (r, s) in remove.iter_mut().zip(&scores) {
            *r = *s < max;
        }
    } else {
        let k = (cfg.sigma_static * n as f64 / 100.0).floor() as usize;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
        for &i in order.iter().take(k) {
            remove[i] = true;
        }
    }
    let split = split_by(tracks, &remove);
    if split.0.is_empty() {
        return Err(Error::EmptyResult("static"));
    }
    Ok(split)
}

/// Drops tracks whose invisible fraction exceeds `sigma_reliable`.
pub fn filter_unreliable(tracks: Vec<SegmentTrack>, cfg: &FilterConfig) -> Split {
    let remove: Vec<bool> = tracks
        .iter()
        .map(|t| {
            let hidden = t.vis.iter().filter(|v| !**v).count();
            t.is_empty() || hidden as f64 / t.len() as f64 > cfg.sigma_reliable
        })
        .collect();
    split_by(tracks, &remove)
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// `median + k * max(MAD, MAD_FLOOR)` of the given residuals.
pub fn outlier_bound(residuals: &[f64], k: f64) -> f64 {
    if residuals.is_empty() {
        return f64::INFINITY;
    }
    let mut r = residuals.to_vec();
    r.sort_by(f64::total_cmp);
    let med = median(&r);
    let mut dev: Vec<f64> = r.iter().map(|x| (x - med).abs()).collect();
    dev.sort_by(f64::total_cmp);
    med + k * median(&dev).max(MAD_FLOOR)
}

/// Drops tracks whose mean registration residual exceeds the robust bound.
/// Tracks without a residual (no correspondences) are kept.
pub fn filter_outliers(
    tracks: Vec<SegmentTrack>,
    residuals: &BTreeMap<u64, f64>,
    cfg: &FilterConfig,
) -> Result<Split> {
    let values: Vec<f64> = tracks.iter().filter_map(|t| residuals.get(&t.id()).copied()).collect();
    let bound = outlier_bound(&values, cfg.outlier_k);
    let remove: Vec<bool> = tracks
        .iter()
        .map(|t| residuals.get(&t.id()).is_some_and(|r| *r > bound))
        .collect();
    let split = split_by(tracks, &remove);
    if split.0.len() < MIN_TRACKS {
        return Err(Error::InsufficientTracks {
            kept: split.0.len(),
            required: MIN_TRACKS,
        });
    }
    Ok(split)
}

pub fn removals(removed: &[SegmentTrack], reason: RemovalReason) -> Vec<Removal> {
    removed.iter().map(|t| Removal { id: t.id(), reason }).collect()
}
