//! Visibility-weighted trajectory smoothing.
//!
//! Minimizes, independently per axis,
//!
//! ```text
//! E(p) = sum_t  v_t |p_t - obs_t|^2
//!      + lambda_vel  |p_t - p_{t-1}|^2                         (t >= 1)
//!      + lambda_jerk |p_t - 3 p_{t-1} + 3 p_{t-2} - p_{t-3}|^2  (t >= 3)
//! ```
//!
//! The normal equations are symmetric positive definite with half-bandwidth
//! 3 and are solved by a banded Cholesky factorization.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trackio::Track3D;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmootherConfig {
    pub lambda_vel: f64,
    pub lambda_jerk: f64,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        SmootherConfig {
            lambda_vel: 0.5,
            lambda_jerk: 5.0,
        }
    }
}

impl SmootherConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_vel >= 0.0 && self.lambda_jerk >= 0.0)
            || !self.lambda_vel.is_finite()
            || !self.lambda_jerk.is_finite()
        {
            return Err(Error::InvalidArgument(format!(
                "smoothing weights must be finite and non-negative, got {self:?}"
            )));
        }
        Ok(())
    }
}

const BAND: usize = 3;
const VELOCITY_STENCIL: [f64; 2] = [1.0, -1.0];
const JERK_STENCIL: [f64; 4] = [1.0, -3.0, 3.0, -1.0];

/// Symmetric banded matrix, lower storage: `lower[i][k] = A[i][i - k]`.
#[derive(Debug, Clone)]
pub struct BandedSpd {
    lower: Vec<[f64; BAND + 1]>,
}

impl BandedSpd {
    pub fn zeros(n: usize) -> Self {
        BandedSpd {
            lower: vec![[0.0; BAND + 1]; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// `A[i][j]` for `|i - j| <= 3`, zero elsewhere.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        if hi - lo > BAND {
            0.0
        } else {
            self.lower[hi][hi - lo]
        }
    }

    /// Adds `weight * d d^T` where `d` has `stencil[k]` at index `t - k`.
    fn add_stencil(&mut self, t: usize, stencil: &[f64], weight: f64) {
        for (a, sa) in stencil.iter().enumerate() {
            for (b, sb) in stencil.iter().enumerate().skip(a) {
                // rows t-a >= t-b
                self.lower[t - a][b - a] += weight * sa * sb;
            }
        }
    }

    /// Solves `A x = b` by banded Cholesky.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let scale = self.lower.iter().map(|r| r[0]).fold(0.0, f64::max);
        let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
        let mut l = vec![[0.0; BAND + 1]; n];
        for i in 0..n {
            let first = i.saturating_sub(BAND);
            for j in first..=i {
                let mut s = self.lower[i][i - j];
                for k in first.max(j.saturating_sub(BAND))..j {
                    s -= l[i][i - k] * l[j][j - k];
                }
                if i == j {
                    if !(s > tol) {
                        return Err(Error::IllPosed(format!(
                            "normal equations are singular at frame {i} (pivot {s:e})"
                        )));
                    }
                    l[i][0] = s.sqrt();
                } else {
                    l[i][i - j] = s / l[j][0];
                }
            }
        }
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(BAND)..i {
                s -= l[i][i - k] * y[k];
            }
            y[i] = s / l[i][0];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n.min(i + BAND + 1) {
                s -= l[k][k - i] * x[k];
            }
            x[i] = s / l[i][0];
        }
        Ok(x)
    }
}

/// Normal-equation matrix for `n` frames with per-frame fidelity weights.
pub fn assemble_system(weights: &[f64], cfg: &SmootherConfig) -> BandedSpd {
    let n = weights.len();
    let mut a = BandedSpd::zeros(n);
    for (t, w) in weights.iter().enumerate() {
        a.lower[t][0] += w;
    }
    if cfg.lambda_vel > 0.0 {
        for t in 1..n {
            a.add_stencil(t, &VELOCITY_STENCIL, cfg.lambda_vel);
        }
    }
    if cfg.lambda_jerk > 0.0 {
        for t in BAND..n {
            a.add_stencil(t, &JERK_STENCIL, cfg.lambda_jerk);
        }
    }
    a
}

/// Smooths one scalar series. Samples with zero weight may hold any value.
pub fn smooth_series(observed: &[f64], weights: &[f64], cfg: &SmootherConfig) -> Result<Vec<f64>> {
    if observed.len() != weights.len() {
        return Err(Error::InvalidArgument("series and weights differ in length".into()));
    }
    if !weights.iter().any(|&w| w > 0.0) {
        return Err(Error::IllPosed("no visible frames".into()));
    }
    let a = assemble_system(weights, cfg);
    let b: Vec<f64> = observed
        .iter()
        .zip(weights)
        .map(|(x, &w)| if w > 0.0 { w * x } else { 0.0 })
        .collect();
    a.solve(&b)
}

/// Smooths a 3D track. Frames outside `vis` get no fidelity weight and are
/// filled in by the smoothness terms; every output frame is marked valid.
pub fn smooth_track(track: &Track3D, vis: &[bool], cfg: &SmootherConfig) -> Result<Track3D> {
    let n = track.positions.len();
    if n == 0 || vis.len() != n {
        return Err(Error::InvalidArgument(format!(
            "track {} has {} frames and a mask of {}",
            track.id,
            n,
            vis.len()
        )));
    }
    let weights: Vec<f64> = vis.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
    if !vis.iter().any(|&v| v) {
        return Err(Error::IllPosed(format!("track {} has no visible frames", track.id)));
    }
    let a = assemble_system(&weights, cfg);
    let mut out = vec![Vector3::zeros(); n];
    for axis in 0..3 {
        let b: Vec<f64> = track
            .positions
            .iter()
            .zip(vis)
            .map(|(p, &v)| if v { p[axis] } else { 0.0 })
            .collect();
        let x = a.solve(&b)?;
        for (o, xi) in out.iter_mut().zip(x) {
            o[axis] = xi;
        }
    }
    Ok(Track3D {
        id: track.id,
        positions: out,
        valid: vec![true; n],
    })
}

/// Evaluates the smoothing cost of `p` against `observed`.
pub fn smoothing_energy(
    p: &[Vector3<f64>],
    observed: &[Vector3<f64>],
    vis: &[bool],
    cfg: &SmootherConfig,
) -> f64 {
    let mut e = 0.0;
    for t in 0..p.len() {
        if vis[t] {
            e += (p[t] - observed[t]).norm_squared();
        }
        if t >= 1 {
            e += cfg.lambda_vel * (p[t] - p[t - 1]).norm_squared();
        }
        if t >= 3 {
            e += cfg.lambda_jerk * (p[t] - 3.0 * p[t - 1] + 3.0 * p[t - 2] - p[t - 3]).norm_squared();
        }
    }
    e
}
