//! Interaction intervals from a per-frame hand-detection signal.
//!
//! The signal is averaged over the `w_h` most recent frames (fewer during
//! warm-up), thresholded at `tau_h`, and every maximal run at or above the
//! threshold becomes a candidate segment. Candidates whose frame count lies
//! outside `[t_min, t_max]` are dropped.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmenterConfig {
    pub w_h: usize,
    pub tau_h: f64,
    pub t_min: usize,
    pub t_max: usize,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        SegmenterConfig {
            w_h: 6,
            tau_h: 0.5,
            t_min: 30,
            t_max: 90,
        }
    }
}

impl SegmenterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.w_h < 1 {
            return Err(Error::InvalidArgument("w_h must be at least 1".into()));
        }
        if !(self.tau_h > 0.0 && self.tau_h <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "tau_h must lie in (0, 1], got {}",
                self.tau_h
            )));
        }
        if self.t_min == 0 || self.t_min > self.t_max {
            return Err(Error::InvalidArgument(format!(
                "duration bounds must satisfy 0 < t_min <= t_max, got [{}, {}]",
                self.t_min, self.t_max
            )));
        }
        Ok(())
    }
}

/// Inclusive frame interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Segment { start, end }
    }

    /// Number of frames covered.
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn intersection(&self, other: &Segment) -> usize {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        if lo > hi {
            0
        } else {
            hi - lo + 1
        }
    }

    /// 1-D intersection over union on inclusive frame counts.
    pub fn iou(&self, other: &Segment) -> f64 {
        let inter = self.intersection(other);
        let union = self.len() + other.len() - inter;
        inter as f64 / union as f64
    }
}

/// Trailing moving average with a partial window during warm-up.
pub fn moving_average(d: &[bool], w_h: usize) -> Vec<f64> {
    let w = w_h.max(1);
    let mut out = Vec::with_capacity(d.len());
    let mut sum = 0usize;
    for t in 0..d.len() {
        sum += d[t] as usize;
        if t >= w {
            sum -= d[t - w] as usize;
        }
        let n = (t + 1).min(w);
        out.push(sum as f64 / n as f64);
    }
    out
}

/// Maximal runs of `d_bar >= tau_h` that satisfy the duration bounds.
pub fn extract_segments(d_bar: &[f64], cfg: &SegmenterConfig) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    for (t, &x) in d_bar.iter().enumerate() {
        match (open, x >= cfg.tau_h) {
            (None, true) => open = Some(t),
            (Some(s), false) => {
                out.push(Segment::new(s, t - 1));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        out.push(Segment::new(s, d_bar.len() - 1));
    }
    out.retain(|s| (cfg.t_min..=cfg.t_max).contains(&s.len()));
    out
}

pub fn segment_signal(d: &[bool], cfg: &SegmenterConfig) -> Vec<Segment> {
    extract_segments(&moving_average(d, cfg.w_h), cfg)
}

/// Greedy one-to-one matching in descending IoU; only pairs with IoU > 0.5
/// are eligible. Returns `(pred_idx, gt_idx)` sorted by prediction index.
pub fn match_segments(pred: &[Segment], gt: &[Segment]) -> Vec<(usize, usize)> {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gt.iter().enumerate() {
            let iou = p.iou(g);
            if iou > 0.5 {
                candidates.push((iou, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut pred_used = vec![false; pred.len()];
    let mut gt_used = vec![false; gt.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !pred_used[i] && !gt_used[j] {
            pred_used[i] = true;
            gt_used[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    pairs
}
