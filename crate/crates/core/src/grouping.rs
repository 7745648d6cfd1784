//! Instance proposals from per-point semantic and offset predictions.
//!
//! Points are clustered twice, once on raw coordinates and once on
//! coordinates shifted by their predicted centroid offsets. The union of both
//! proposal sets is then score-filtered and pruned by greedy point-set NMS.

use std::collections::{HashMap, VecDeque};

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{index_set_iou, PartClass, PointCloud, Proposal};

/// Per-point network outputs consumed by grouping.
#[derive(Debug, Clone, PartialEq)]
pub struct PerPointPrediction {
    /// Hard semantic labels, 0 = background.
    pub semantic: Vec<u8>,
    /// Vectors from each point toward its instance centroid, metres.
    pub offsets: Vec<Vector3<f64>>,
    pub fg_prob: Option<Vec<f64>>,
}

impl PerPointPrediction {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.semantic.len() != n || self.offsets.len() != n {
            return Err(Error::input(format!(
                "prediction arrays ({} labels, {} offsets) do not match {n} points",
                self.semantic.len(),
                self.offsets.len()
            )));
        }
        if let Some(fg) = &self.fg_prob {
            if fg.len() != n {
                return Err(Error::input("foreground probability length mismatch"));
            }
        }
        if self.semantic.iter().any(|&l| l > 9) {
            return Err(Error::input("semantic label out of range 0..=9"));
        }
        if !self.offsets.iter().all(|o| o.iter().all(|v| v.is_finite())) {
            return Err(Error::input("offsets must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroupingParams {
    pub radius: f64,
    pub min_points: usize,
}

impl Default for GroupingParams {
    fn default() -> Self {
        GroupingParams {
            radius: 0.03,
            min_points: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterParams {
    pub fg_thresh: f64,
    pub score_thresh: f64,
    pub nms_iou: f64,
    pub min_points: usize,
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams {
            fg_thresh: 0.4,
            score_thresh: 0.09,
            nms_iou: 0.3,
            min_points: 5,
        }
    }
}

/// Uniform voxel hash with cell size equal to the query radius.
pub struct VoxelGrid<'a> {
    points: &'a [Point3<f64>],
    radius: f64,
    cell: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl<'a> VoxelGrid<'a> {
    pub fn new(points: &'a [Point3<f64>], radius: f64) -> Self {
        // Slightly inflated so a pair at exactly `radius` never lands two
        // cells apart after rounding.
        let cell = radius * (1.0 + 1e-9);
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(i);
        }
        VoxelGrid {
            points,
            radius,
            cell,
            cells,
        }
    }

    fn key(p: &Point3<f64>, cell: f64) -> [i64; 3] {
        [
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        ]
    }

    /// Indices `j != i` with `|p_j - p_i| <= radius`, ascending.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let p = &self.points[i];
        let r2 = self.radius * self.radius;
        let [kx, ky, kz] = Self::key(p, self.cell);
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = self.cells.get(&[kx + dx, ky + dy, kz + dz]) {
                        out.extend(
                            bucket
                                .iter()
                                .copied()
                                .filter(|&j| j != i && (self.points[j] - p).norm_squared() <= r2),
                        );
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// O(N^2) reference for [`VoxelGrid::neighbors`].
pub fn brute_force_neighbors(points: &[Point3<f64>], i: usize, radius: f64) -> Vec<usize> {
    let r2 = radius * radius;
    (0..points.len())
        .filter(|&j| j != i && (points[j] - points[i]).norm_squared() <= r2)
        .collect()
}

/// Breadth-first flood over radius neighbours sharing the seed's non-zero
/// label. Components are returned in order of their smallest index, each
/// sorted ascending.
pub fn flood_clusters(points: &[Point3<f64>], labels: &[u8], radius: f64) -> Vec<Vec<usize>> {
    let grid = VoxelGrid::new(points, radius);
    let mut visited = vec![false; points.len()];
    let mut clusters = Vec::new();
    let mut queue = VecDeque::new();
    for seed in 0..points.len() {
        if visited[seed] || labels[seed] == 0 {
            continue;
        }
        let label = labels[seed];
        visited[seed] = true;
        queue.push_back(seed);
        let mut members = Vec::new();
        while let Some(i) = queue.pop_front() {
            members.push(i);
            for j in grid.neighbors(i) {
                if !visited[j] && labels[j] == label {
                    visited[j] = true;
                    queue.push_back(j);
                }
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }
    clusters
}

/// Most frequent non-background label among `indices`; ties go to the
/// smaller id.
pub fn majority_label(labels: &[u8], indices: &[usize]) -> Option<PartClass> {
    let mut counts = [0usize; 10];
    for &i in indices {
        counts[usize::from(labels[i])] += 1;
    }
    let (best, count) = (1..10u8).fold((0u8, 0usize), |acc, l| {
        let c = counts[usize::from(l)];
        if c > acc.1 {
            (l, c)
        } else {
            acc
        }
    });
    (count > 0).then(|| PartClass::from_id(best)).flatten()
}

/// Mean foreground probability over a proposal, or 1 without a fg channel.
pub fn mean_fg_score(fg_prob: Option<&[f64]>, indices: &[usize]) -> f64 {
    match fg_prob {
        Some(fg) if !indices.is_empty() => indices.iter().map(|&i| fg[i]).sum::<f64>() / indices.len() as f64,
        _ => 1.0,
    }
}

/// Dual-set grouping.
///
/// Returns raw-coordinate clusters followed by offset-shifted clusters, with
/// exact duplicates removed. Each proposal's score is the mean foreground
/// probability of its points (1 when the prediction has no fg channel).
pub fn dual_set_group(
    cloud: &PointCloud,
    pred: &PerPointPrediction,
    params: &GroupingParams,
) -> Result<Vec<Proposal>> {
    pred.validate(cloud.len())?;
    if !(params.radius > 0.0) {
        return Err(Error::input("cluster radius must be positive"));
    }
    let shifted: Vec<Point3<f64>> = cloud
        .positions
        .iter()
        .zip(&pred.offsets)
        .map(|(p, o)| p + o)
        .collect();

    let mut out: Vec<Proposal> = Vec::new();
    for coords in [&cloud.positions, &shifted] {
        for members in flood_clusters(coords, &pred.semantic, params.radius) {
            if members.len() < params.min_points {
                continue;
            }
            if out.iter().any(|p| p.point_indices == members) {
                continue;
            }
            let Some(label) = majority_label(&pred.semantic, &members) else {
                continue;
            };
            let score = mean_fg_score(pred.fg_prob.as_deref(), &members);
            out.push(Proposal::new(members, label, score));
        }
    }
    Ok(out)
}

/// Foreground filtering, score thresholding and greedy point-set NMS.
///
/// Survivors are returned in descending score order (stable on ties) with
/// `score` set from `scores`.
pub fn filter_and_nms(
    proposals: &[Proposal],
    scores: &[f64],
    fg_prob: Option<&[f64]>,
    params: &FilterParams,
) -> Result<Vec<Proposal>> {
    if scores.len() != proposals.len() {
        return Err(Error::input(format!(
            "{} scores supplied for {} proposals",
            scores.len(),
            proposals.len()
        )));
    }
    let mut candidates: Vec<Proposal> = Vec::new();
    for (p, &score) in proposals.iter().zip(scores) {
        if !score.is_finite() || score < params.score_thresh {
            continue;
        }
        let kept: Vec<usize> = match fg_prob {
            Some(fg) => p
                .point_indices
                .iter()
                .copied()
                .filter(|&i| fg[i] >= params.fg_thresh)
                .collect(),
            None => p.point_indices.clone(),
        };
        if kept.len() < params.min_points {
            continue;
        }
        candidates.push(Proposal {
            point_indices: kept,
            semantic_label: p.semantic_label,
            score,
            domain_label: p.domain_label,
        });
    }

    // Stable sort keeps input order among equal scores.
    candidates.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut kept: Vec<Proposal> = Vec::new();
    for c in candidates {
        let suppressed = kept.iter().any(|k| {
            k.point_indices == c.point_indices || index_set_iou(&k.point_indices, &c.point_indices) > params.nms_iou
        });
        if !suppressed {
            kept.push(c);
        }
    }
    Ok(kept)
}
