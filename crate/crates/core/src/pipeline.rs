//! The steps behind each CLI subcommand, and the documents they exchange.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grouping::{dual_set_group, filter_and_nms, FilterParams, GroupingParams, PerPointPrediction};
use crate::manip::{actuation_trajectory, check_success, grasp_pose_with, replay_motion, GraspOptions, GripperPose, Trajectory, TrajectoryConfig};
use crate::metrics::{instance_map, pose_errors, summarize, GtInstance, MapReport, PoseErrors, PoseSummary};
use crate::posefit::{fit_part, RansacConfig};
use crate::types::{JointKind, JointParams, PartClass, PartPose, PointCloud, Proposal, SimilarityTransform};

/// Output of `segment`; input of `fit-pose` and `eval-seg`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalsDoc {
    pub num_points: usize,
    pub proposals: Vec<Proposal>,
}

/// Grouping followed by filtering and NMS.
pub fn segment(
    cloud: &PointCloud,
    pred: &PerPointPrediction,
    grouping: &GroupingParams,
    filter: &FilterParams,
) -> Result<ProposalsDoc> {
    let raw = dual_set_group(cloud, pred, grouping)?;
    let scores: Vec<f64> = raw.iter().map(|p| p.score).collect();
    let proposals = filter_and_nms(&raw, &scores, pred.fg_prob.as_deref(), filter)?;
    Ok(ProposalsDoc {
        num_points: cloud.len(),
        proposals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartRecord {
    pub id: usize,
    pub label: PartClass,
    pub pose: PartPose,
    pub joint: JointParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<SimilarityTransform>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_inliers: Option<usize>,
}

/// Output of `fit-pose`; input of `eval-pose` and `plan`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartsDoc {
    pub parts: Vec<PartRecord>,
}

/// Fits one pose per proposal; part `id` is the proposal's position.
pub fn fit_poses(cloud: &PointCloud, npcs: &[Vector3<f64>], doc: &ProposalsDoc, ransac: &RansacConfig) -> Result<PartsDoc> {
    if npcs.len() != cloud.len() || doc.num_points != cloud.len() {
        return Err(Error::input(format!(
            "cloud has {} points, NPCS map {}, proposals refer to {}",
            cloud.len(),
            npcs.len(),
            doc.num_points
        )));
    }
    let mut parts = Vec::with_capacity(doc.proposals.len());
    for (id, p) in doc.proposals.iter().enumerate() {
        p.validate(cloud.len()).map_err(|e| Error::input(format!("part {id}: {e}")))?;
        let pts: Vec<Vector3<f64>> = p.point_indices.iter().map(|&i| cloud.positions[i].coords).collect();
        let uvw: Vec<Vector3<f64>> = p.point_indices.iter().map(|&i| npcs[i]).collect();
        let fit = fit_part(&pts, &uvw, p.semantic_label, ransac).map_err(|e| Error::Fit(format!("part {id}: {e}")))?;
        parts.push(PartRecord {
            id,
            label: p.semantic_label,
            pose: fit.pose,
            joint: fit.joint,
            transform: Some(fit.transform),
            num_inliers: Some(fit.num_inliers),
        });
    }
    Ok(PartsDoc { parts })
}

/// Ground-truth instances from per-point labels: one per non-negative
/// instance id, classed by the majority semantic label of its points.
pub fn gt_instances(cloud: &PointCloud) -> Result<Vec<GtInstance>> {
    let (Some(sem), Some(inst)) = (&cloud.semantic_labels, &cloud.instance_labels) else {
        return Err(Error::input("ground-truth cloud needs semantic_label and instance_label"));
    };
    let mut groups: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, &id) in inst.iter().enumerate() {
        if id >= 0 {
            groups.entry(id).or_default().push(i);
        }
    }
    let mut out = Vec::with_capacity(groups.len());
    for (id, indices) in groups {
        let mut votes = [0usize; 10];
        for &i in &indices {
            votes[usize::from(sem[i]).min(9)] += 1;
        }
        let (label, _) = votes
            .iter()
            .enumerate()
            .skip(1)
            .fold((0, 0), |best, (l, &n)| if n > best.1 { (l, n) } else { best });
        let label = PartClass::from_id(label as u8)
            .ok_or_else(|| Error::input(format!("instance {id} has only background points")))?;
        out.push(GtInstance { indices, label });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegEvalDoc {
    pub iou_thresholds: Vec<f64>,
    /// AP at IoU 0.5, per class and mean.
    pub ap50: BTreeMap<PartClass, f64>,
    pub mean_ap50: Option<f64>,
    pub map: MapReport,
}

pub fn eval_segmentation(proposals: &ProposalsDoc, gt: &PointCloud) -> Result<SegEvalDoc> {
    if proposals.num_points != gt.len() {
        return Err(Error::input("proposals and ground truth refer to different clouds"));
    }
    for p in &proposals.proposals {
        p.validate(gt.len())?;
    }
    let gts = gt_instances(gt)?;
    let map = instance_map(&proposals.proposals, &gts);
    let first = map.per_threshold.first().cloned().ok_or_else(|| Error::Metric("no thresholds".into()))?;
    Ok(SegEvalDoc {
        iou_thresholds: crate::metrics::map_thresholds().to_vec(),
        ap50: first.per_class,
        mean_ap50: first.mean,
        map,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartErrors {
    pub id: usize,
    pub label: PartClass,
    pub errors: PoseErrors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseEvalDoc {
    pub per_part: Vec<PartErrors>,
    pub summary: PoseSummary,
}

/// Matches parts by `id`; a ground-truth part without a same-class
/// prediction is counted as skipped.
pub fn eval_poses(pred: &PartsDoc, gt: &PartsDoc) -> Result<PoseEvalDoc> {
    let by_id: BTreeMap<usize, &PartRecord> = pred.parts.iter().map(|p| (p.id, p)).collect();
    let mut per_part = Vec::new();
    let mut skipped = 0;
    for g in &gt.parts {
        match by_id.get(&g.id) {
            Some(p) if p.label == g.label => {
                let errors = pose_errors(&p.pose, &p.joint, &g.pose, &g.joint, g.label)
                    .map_err(|e| Error::Metric(format!("part {}: {e}", g.id)))?;
                per_part.push(PartErrors {
                    id: g.id,
                    label: g.label,
                    errors,
                });
            }
            _ => skipped += 1,
        }
    }
    let errs: Vec<PoseErrors> = per_part.iter().map(|p| p.errors).collect();
    Ok(PoseEvalDoc {
        summary: summarize(&errs, skipped),
        per_part,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDoc {
    pub part_id: usize,
    pub label: PartClass,
    pub joint: JointParams,
    pub grasp: GripperPose,
    /// Metres (prismatic) or radians (revolute).
    pub motion_range: f64,
    pub trajectory: Trajectory,
    /// Motion obtained by replaying the trajectory kinematically.
    pub replayed_motion: f64,
    pub success: bool,
}

pub fn plan(part: &PartRecord, motion_range: f64, opts: &GraspOptions, cfg: &TrajectoryConfig) -> Result<PlanDoc> {
    if part.joint.kind == JointKind::Fixed {
        return Err(Error::Policy(format!("part {} ({}) has no joint to actuate", part.id, part.label)));
    }
    let grasp = grasp_pose_with(&part.pose, part.label, opts);
    let trajectory = actuation_trajectory(&grasp, &part.joint, motion_range, cfg)?;
    let replayed_motion = replay_motion(&trajectory, &part.joint)?;
    Ok(PlanDoc {
        part_id: part.id,
        label: part.label,
        joint: part.joint,
        grasp,
        motion_range,
        success: check_success(replayed_motion, motion_range),
        replayed_motion,
        trajectory,
    })
}
