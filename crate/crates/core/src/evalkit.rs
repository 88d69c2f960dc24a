//! Axis error metrics, segment matching and per-type aggregate reports.

use std::cmp::Ordering;
use std::fmt::Write as _;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::artmodel::{ArticulationRecord, JointType};
use crate::error::{Error, Result};
use crate::segmenter::{match_segments, Segment};

/// Below this cross-product norm two axes are treated as parallel.
pub const PARALLEL_EPS: f64 = 1e-4;

/// One labelled interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub segment: Segment,
    #[serde(rename = "type")]
    pub joint_type: JointType,
    pub axis_dir: [f64; 3],
    pub axis_point: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<String>,
}

/// Angle in degrees between two axes, ignoring sign and scale.
pub fn angular_error(a_hat: &Vector3<f64>, a: &Vector3<f64>) -> Result<f64> {
    let (n1, n2) = (a_hat.norm(), a.norm());
    if !(n1 > 0.0 && n2 > 0.0) || !n1.is_finite() || !n2.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "angular_error needs nonzero finite axes, got {a_hat:?} and {a:?}"
        )));
    }
    let c = (a_hat.dot(a).abs() / (n1 * n2)).clamp(-1.0, 1.0);
    Ok(c.acos().to_degrees())
}

/// Shortest distance between two axis lines, each given by a point and a
/// unit direction.
pub fn axis_distance(
    p_hat: &Vector3<f64>,
    a_hat: &Vector3<f64>,
    p: &Vector3<f64>,
    a: &Vector3<f64>,
) -> Result<f64> {
    let finite = [p_hat, a_hat, p, a].iter().all(|v| v.iter().all(|x| x.is_finite()));
    if !finite {
        return Err(Error::InvalidArgument("axis_distance needs finite input".into()));
    }
    let cross = a_hat.cross(a);
    let n = cross.norm();
    let d = if n > PARALLEL_EPS {
        (p_hat - p).dot(&cross) / n
    } else {
        (p_hat - p).cross(a).norm()
    };
    Ok(d.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointEval {
    pub segment: Segment,
    pub gt_type: JointType,
    pub matched: bool,
    /// Matched prediction's segment.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pred_segment: Option<Segment>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pred_type: Option<JointType>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_err: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_l2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub type_correct: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeAggregate {
    #[serde(rename = "type")]
    pub joint_type: JointType,
    pub gt_count: usize,
    pub matched: usize,
    pub mean_theta_err: Option<f64>,
    pub mean_d_l2: Option<f64>,
    pub type_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub joints: Vec<JointEval>,
    pub aggregates: Vec<TypeAggregate>,
    pub unmatched_gt: usize,
    pub unmatched_pred: usize,
}

fn cmp_axis(a: &[f64; 3], b: &[f64; 3]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn cmp_point(a: &Option<[f64; 3]>, b: &Option<[f64; 3]>) -> Ordering {
    match (a, b) {
        (Some(a), Some(b)) => cmp_axis(a, b),
        _ => a.is_some().cmp(&b.is_some()),
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Matches predictions to ground truth by segment IoU and scores each pair.
/// Both inputs are put in a canonical order first, so the report does not
/// depend on how they were listed.
pub fn evaluate(pred: &[ArticulationRecord], gt: &[GroundTruthRecord]) -> Result<EvalReport> {
    let mut pred: Vec<&ArticulationRecord> = pred.iter().collect();
    pred.sort_by(|a, b| {
        a.segment
            .cmp(&b.segment)
            .then(a.joint_type.cmp(&b.joint_type))
            .then(cmp_axis(&a.axis_dir, &b.axis_dir))
            .then(cmp_point(&a.axis_point, &b.axis_point))
    });
    let mut gt: Vec<&GroundTruthRecord> = gt.iter().collect();
    gt.sort_by(|a, b| {
        a.segment
            .cmp(&b.segment)
            .then(a.joint_type.cmp(&b.joint_type))
            .then(cmp_axis(&a.axis_dir, &b.axis_dir))
            .then(cmp_point(&a.axis_point, &b.axis_point))
    });

    let pred_segments: Vec<Segment> = pred.iter().map(|p| p.segment).collect();
    let gt_segments: Vec<Segment> = gt.iter().map(|g| g.segment).collect();
    let mut match_of_gt = vec![None; gt.len()];
    for (pi, gi) in match_segments(&pred_segments, &gt_segments) {
        match_of_gt[gi] = Some(pi);
    }

    let mut joints = Vec::with_capacity(gt.len());
    for (g, m) in gt.iter().zip(&match_of_gt) {
        let mut row = JointEval {
            segment: g.segment,
            gt_type: g.joint_type,
            matched: m.is_some(),
            pred_segment: None,
            pred_type: None,
            theta_err: None,
            d_l2: None,
            type_correct: None,
            difficulty: g.difficulty.clone(),
        };
        if let Some(pi) = m {
            let p = pred[*pi];
            let a_hat = Vector3::from(p.axis_dir);
            let a = Vector3::from(g.axis_dir);
            row.pred_segment = Some(p.segment);
            row.pred_type = Some(p.joint_type);
            row.theta_err = Some(angular_error(&a_hat, &a)?);
            row.type_correct = Some(p.joint_type == g.joint_type);
            if g.joint_type == JointType::Revolute {
                if let (Some(ph), Some(pg)) = (p.axis_point, g.axis_point) {
                    row.d_l2 = Some(axis_distance(
                        &Vector3::from(ph),
                        &a_hat.normalize(),
                        &Vector3::from(pg),
                        &a.normalize(),
                    )?);
                }
            }
        }
        joints.push(row);
    }

    let aggregates = [JointType::Prismatic, JointType::Revolute]
        .into_iter()
        .map(|ty| {
            let rows: Vec<&JointEval> = joints.iter().filter(|j| j.gt_type == ty).collect();
            let matched: Vec<&&JointEval> = rows.iter().filter(|j| j.matched).collect();
            TypeAggregate {
                joint_type: ty,
                gt_count: rows.len(),
                matched: matched.len(),
                mean_theta_err: mean(matched.iter().filter_map(|j| j.theta_err)),
                mean_d_l2: mean(matched.iter().filter_map(|j| j.d_l2)),
                type_accuracy: mean(
                    matched
                        .iter()
                        .filter_map(|j| j.type_correct)
                        .map(|c| if c { 1.0 } else { 0.0 }),
                ),
            }
        })
        .collect();

    let matched_count = match_of_gt.iter().flatten().count();
    Ok(EvalReport {
        joints,
        aggregates,
        unmatched_gt: gt.len() - matched_count,
        unmatched_pred: pred.len() - matched_count,
    })
}

/// Aligned text rendering of the per-type aggregates.
pub fn render_table(report: &EvalReport) -> String {
    let fmt = |x: Option<f64>, prec: usize| match x {
        Some(v) => format!("{v:.prec$}"),
        None => "--".to_string(),
    };
    let header = ["type", "gt", "matched", "theta_err[deg]", "d_L2[m]", "type_acc"];
    let rows: Vec<[String; 6]> = report
        .aggregates
        .iter()
        .map(|a| {
            [
                a.joint_type.to_string(),
                a.gt_count.to_string(),
                a.matched.to_string(),
                fmt(a.mean_theta_err, 2),
                fmt(a.mean_d_l2, 3),
                fmt(a.type_accuracy, 3),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in &rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(header.to_vec(), &mut out);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(rule.iter().map(String::as_str).collect(), &mut out);
    for r in &rows {
        line(r.iter().map(String::as_str).collect(), &mut out);
    }
    let _ = writeln!(
        out,
        "unmatched: {} ground truth, {} predicted",
        report.unmatched_gt, report.unmatched_pred
    );
    out
}
