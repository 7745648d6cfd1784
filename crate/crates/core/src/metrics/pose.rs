//! Part pose and joint-axis errors.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::box_iou::box_iou;
use crate::types::{rotation_angle, symmetry_group, JointKind, JointParams, PartClass, PartPose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseErrors {
    /// Symmetry-aware rotation error, degrees.
    pub rotation_deg: f64,
    pub translation_cm: f64,
    pub size_cm: f64,
    /// Undirected joint-axis angle, degrees; `None` for fixed parts.
    pub axis_deg: Option<f64>,
    /// Distance between joint axis lines, cm; revolute joints only.
    pub axis_dist_cm: Option<f64>,
    pub iou3d: f64,
}

/// Minimum over the class' symmetry group of the angle of
/// `pred_r · g · gt_rᵀ`, returning the angle (radians) and minimising element.
pub fn symmetric_rotation_error(pred_r: &Matrix3<f64>, gt_r: &Matrix3<f64>, class: PartClass) -> (f64, Matrix3<f64>) {
    let gt_t = gt_r.transpose();
    symmetry_group(class)
        .iter()
        .map(|g| (rotation_angle(&(pred_r * g * gt_t)), *g))
        .fold((f64::INFINITY, Matrix3::identity()), |best, cur| if cur.0 < best.0 { cur } else { best })
}

/// Angle between two axes treated as undirected lines, radians in `[0, π/2]`.
pub fn undirected_axis_angle(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b).abs())
}

/// Shortest distance between the lines `p + s·a` and `q + t·b`.
pub fn line_distance(p: &Vector3<f64>, a: &Vector3<f64>, q: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let w = q - p;
    let n = a.cross(b);
    let n_norm = n.norm();
    if n_norm <= 1e-12 * a.norm() * b.norm() {
        w.cross(a).norm() / a.norm()
    } else {
        w.dot(&n).abs() / n_norm
    }
}

pub fn pose_errors(
    pred: &PartPose,
    pred_joint: &JointParams,
    gt: &PartPose,
    gt_joint: &JointParams,
    class: PartClass,
) -> Result<PoseErrors> {
    if pred_joint.kind != gt_joint.kind {
        return Err(Error::Metric(format!(
            "joint kinds differ: predicted {:?}, ground truth {:?}",
            pred_joint.kind, gt_joint.kind
        )));
    }
    let (angle, g) = symmetric_rotation_error(&pred.rotation, &gt.rotation, class);

    let axis_deg = (pred_joint.kind != JointKind::Fixed)
        .then(|| undirected_axis_angle(&pred_joint.axis_direction, &gt_joint.axis_direction).to_degrees());
    let axis_dist_cm = match (pred_joint.kind, pred_joint.pivot, gt_joint.pivot) {
        (JointKind::Revolute, Some(p), Some(q)) => {
            Some(100.0 * line_distance(&p, &pred_joint.axis_direction, &q, &gt_joint.axis_direction))
        }
        (JointKind::Revolute, _, _) => return Err(Error::Metric("revolute joint without pivot".into())),
        _ => None,
    };

    // The GT box expressed in the symmetric frame closest to the prediction.
    let aligned_gt = PartPose {
        rotation: gt.rotation * g.transpose(),
        ..*gt
    };
    Ok(PoseErrors {
        rotation_deg: angle.to_degrees(),
        translation_cm: 100.0 * (pred.translation - gt.translation).norm(),
        size_cm: 100.0 * (pred.size - gt.size).norm(),
        axis_deg,
        axis_dist_cm,
        iou3d: box_iou(pred, &aligned_gt),
    })
}

/// Percentage of poses with rotation error below `deg` and translation error
/// below `cm`; `None` for an empty list.
pub fn pose_accuracy(errors: &[PoseErrors], deg: f64, cm: f64) -> Option<f64> {
    if errors.is_empty() {
        return None;
    }
    let hits = errors
        .iter()
        .filter(|e| e.rotation_deg < deg && e.translation_cm < cm)
        .count();
    Some(100.0 * hits as f64 / errors.len() as f64)
}

/// Dataset-level averages under their conventional short names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseSummary {
    /// Parts that were detected and evaluated.
    pub matched: usize,
    /// Ground-truth parts skipped because no prediction was matched.
    pub skipped: usize,
    #[serde(rename = "R_e")]
    pub r_e: Option<f64>,
    #[serde(rename = "T_e")]
    pub t_e: Option<f64>,
    #[serde(rename = "S_e")]
    pub s_e: Option<f64>,
    #[serde(rename = "theta_e")]
    pub theta_e: Option<f64>,
    #[serde(rename = "d_e")]
    pub d_e: Option<f64>,
    /// Mean 3D IoU in percent.
    #[serde(rename = "mIoU")]
    pub miou: Option<f64>,
    #[serde(rename = "A5")]
    pub a5: Option<f64>,
    #[serde(rename = "A10")]
    pub a10: Option<f64>,
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

pub fn summarize(errors: &[PoseErrors], skipped: usize) -> PoseSummary {
    PoseSummary {
        matched: errors.len(),
        skipped,
        r_e: mean_of(errors.iter().map(|e| e.rotation_deg)),
        t_e: mean_of(errors.iter().map(|e| e.translation_cm)),
        s_e: mean_of(errors.iter().map(|e| e.size_cm)),
        theta_e: mean_of(errors.iter().filter_map(|e| e.axis_deg)),
        d_e: mean_of(errors.iter().filter_map(|e| e.axis_dist_cm)),
        miou: mean_of(errors.iter().map(|e| 100.0 * e.iou3d)),
        a5: pose_accuracy(errors, 5.0, 5.0),
        a10: pose_accuracy(errors, 10.0, 10.0),
    }
}
