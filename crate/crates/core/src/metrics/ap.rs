//! Instance segmentation average precision over point-set masks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::types::{index_set_iou, PartClass, Proposal};

/// Number of recall sample points for interpolated AP.
pub const RECALL_POINTS: usize = 101;

/// A ground-truth instance mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtInstance {
    /// Sorted, unique point indices.
    pub indices: Vec<usize>,
    pub label: PartClass,
}

/// The ten IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn map_thresholds() -> [f64; 10] {
    std::array::from_fn(|k| (50 + 5 * k) as f64 / 100.0)
}

/// Greedy matching outcome at one IoU threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMatchResult {
    /// Per prediction (input order): matched GT index and IoU.
    pub matches: Vec<Option<(usize, f64)>>,
    /// Per class: true-positive flags in descending-score order, and GT count.
    pub per_class: BTreeMap<PartClass, (Vec<bool>, usize)>,
}

/// Prediction indices of one class sorted by descending score; ties keep
/// input order.
fn ranked(preds: &[Proposal], class: PartClass) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..preds.len()).filter(|&i| preds[i].semantic_label == class).collect();
    idx.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score));
    idx
}

/// Greedy matching: in descending score order each prediction takes the
/// unmatched same-class GT of highest IoU (lowest GT index on ties), and is a
/// true positive iff that IoU is at least `iou_thresh`.
pub fn match_instances(preds: &[Proposal], gts: &[GtInstance], iou_thresh: f64) -> InstanceMatchResult {
    let mut matches = vec![None; preds.len()];
    let mut per_class = BTreeMap::new();
    for class in PartClass::ALL {
        let gt_idx: Vec<usize> = (0..gts.len()).filter(|&g| gts[g].label == class).collect();
        let order = ranked(preds, class);
        if gt_idx.is_empty() && order.is_empty() {
            continue;
        }
        let mut taken = vec![false; gt_idx.len()];
        let mut tp = Vec::with_capacity(order.len());
        for &p in &order {
            let mut best: Option<(usize, f64)> = None;
            for (slot, &g) in gt_idx.iter().enumerate() {
                if taken[slot] {
                    continue;
                }
                let iou = index_set_iou(&preds[p].point_indices, &gts[g].indices);
                if best.is_none_or(|(_, b)| iou > b) {
                    best = Some((slot, iou));
                }
            }
            match best {
                Some((slot, iou)) if iou >= iou_thresh => {
                    taken[slot] = true;
                    matches[p] = Some((gt_idx[slot], iou));
                    tp.push(true);
                }
                _ => tp.push(false),
            }
        }
        per_class.insert(class, (tp, gt_idx.len()));
    }
    InstanceMatchResult { matches, per_class }
}

/// 101-point interpolated AP from ranked true-positive flags.
pub fn interpolated_ap(tp: &[bool], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let mut precision = Vec::with_capacity(tp.len());
    let mut recall = Vec::with_capacity(tp.len());
    let mut hits = 0usize;
    for (k, &t) in tp.iter().enumerate() {
        hits += usize::from(t);
        precision.push(hits as f64 / (k + 1) as f64);
        recall.push(hits as f64 / num_gt as f64);
    }
    // right-to-left running max gives the monotone precision envelope
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let mut sum = 0.0;
    let mut k = 0;
    for r in 0..RECALL_POINTS {
        let level = r as f64 / (RECALL_POINTS - 1) as f64;
        while k < recall.len() && recall[k] < level {
            k += 1;
        }
        if k < recall.len() {
            sum += precision[k];
        }
    }
    sum / RECALL_POINTS as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    /// Classes with at least one GT instance.
    pub per_class: BTreeMap<PartClass, f64>,
    /// Mean over `per_class`; `None` when no class has ground truth.
    pub mean: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn instance_ap(preds: &[Proposal], gts: &[GtInstance], iou_thresh: f64) -> ApReport {
    let matched = match_instances(preds, gts, iou_thresh);
    let per_class: BTreeMap<PartClass, f64> = matched
        .per_class
        .iter()
        .filter(|(_, (_, n_gt))| *n_gt > 0)
        .map(|(&c, (tp, n_gt))| (c, interpolated_ap(tp, *n_gt)))
        .collect();
    let mean = mean(per_class.values().copied());
    ApReport { per_class, mean }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    /// Per-threshold reports, in [`map_thresholds`] order.
    pub per_threshold: Vec<ApReport>,
    /// Per-class AP averaged over thresholds.
    pub per_class: BTreeMap<PartClass, f64>,
    pub mean: Option<f64>,
}

/// AP averaged over IoU thresholds 0.50:0.05:0.95.
pub fn instance_map(preds: &[Proposal], gts: &[GtInstance]) -> MapReport {
    let per_threshold: Vec<ApReport> = map_thresholds().iter().map(|&t| instance_ap(preds, gts, t)).collect();
    let mut per_class = BTreeMap::new();
    if let Some(first) = per_threshold.first() {
        for &class in first.per_class.keys() {
            let avg = mean(per_threshold.iter().map(|r| r.per_class[&class])).unwrap_or(0.0);
            per_class.insert(class, avg);
        }
    }
    let mean = mean(per_threshold.iter().filter_map(|r| r.mean));
    MapReport {
        per_threshold,
        per_class,
        mean,
    }
}
