//! Synthetic scene and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gapart::grouping::{FilterParams, GroupingParams, PerPointPrediction};
use gapart::io::blob::{self, FG_CHANNEL, NPCS_CHANNELS, PREDICTION_CHANNELS};
use gapart::io::ply;
use gapart::pipeline::{PartRecord, PartsDoc, ProposalsDoc};
use gapart::posefit::joint_from_pose;
use gapart::types::{index_set_iou, PartClass, PartPose, PointCloud, Proposal};
use nalgebra::{Matrix3, Point3, Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/scene")
}

pub fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    let q = Quaternion::new(
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
    );
    UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner()
}

/// A labelled cloud with exact per-point predictions.
pub struct Scene {
    pub cloud: PointCloud,
    pub pred: PerPointPrediction,
    pub npcs: Vec<Vector3<f64>>,
    /// Ground-truth instance poses by instance id.
    pub poses: Vec<(PartClass, PartPose)>,
}

struct PartSpec {
    class: PartClass,
    size: Vector3<f64>,
    /// Number of leading samples given a low foreground probability.
    low_fg: usize,
}

const SPACING: f64 = 0.015;

fn grid(size: &Vector3<f64>) -> Vec<Vector3<f64>> {
    let n = |s: f64| (s / SPACING).round() as i64 + 1;
    let (nx, ny, nz) = (n(size.x), n(size.y), n(size.z));
    let coord = |k: i64, count: i64| (k as f64 - (count - 1) as f64 / 2.0) * SPACING;
    let mut out = Vec::new();
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                out.push(Vector3::new(coord(i, nx), coord(j, ny), coord(k, nz)));
            }
        }
    }
    out
}

pub fn scene(seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let specs = [
        PartSpec { class: PartClass::SliderDrawer, size: Vector3::new(0.15, 0.09, 0.03), low_fg: 0 },
        PartSpec { class: PartClass::HingeDoor, size: Vector3::new(0.12, 0.15, 0.015), low_fg: 10 },
        PartSpec { class: PartClass::HingeKnob, size: Vector3::new(0.03, 0.03, 0.03), low_fg: 0 },
        PartSpec { class: PartClass::LineFixedHandle, size: Vector3::new(0.15, 0.015, 0.015), low_fg: 0 },
    ];
    let mut positions = Vec::new();
    let mut semantic = Vec::new();
    let mut instance = Vec::new();
    let mut offsets = Vec::new();
    let mut fg = Vec::new();
    let mut npcs = Vec::new();
    let mut poses = Vec::new();
    for (id, spec) in specs.iter().enumerate() {
        let rotation = random_rotation(&mut rng);
        let translation = Vector3::new(0.4 * id as f64 - 0.6, rng.random_range(-0.1..0.1), 1.0 + rng.random_range(-0.1..0.1));
        let local = grid(&spec.size);
        let lo = local.iter().fold(local[0], |a, p| a.inf(p));
        let hi = local.iter().fold(local[0], |a, p| a.sup(p));
        let center = (lo + hi) / 2.0;
        let diag = (hi - lo).norm();
        let world: Vec<Vector3<f64>> = local.iter().map(|p| rotation * p + translation).collect();
        let centroid = world.iter().sum::<Vector3<f64>>() / world.len() as f64;
        for (k, (w, l)) in world.iter().zip(&local).enumerate() {
            positions.push(Point3::from(*w));
            semantic.push(spec.class.id());
            instance.push(id as i32);
            offsets.push(centroid - w);
            fg.push(if k < spec.low_fg { 0.3 } else { 0.9 });
            npcs.push((l - center) / diag);
        }
        let pose = PartPose::new(rotation, rotation * center + translation, hi - lo).unwrap();
        poses.push((spec.class, pose));
    }
    // background floor
    for i in 0..12 {
        for j in 0..6 {
            let p = Vector3::new(-0.8 + 0.14 * i as f64, 0.4, 0.8 + 0.1 * j as f64);
            positions.push(Point3::from(p));
            semantic.push(0);
            instance.push(-1);
            offsets.push(Vector3::zeros());
            fg.push(0.1);
            npcs.push(Vector3::zeros());
        }
    }
    let cloud = PointCloud {
        positions,
        colors: None,
        semantic_labels: Some(semantic.clone()),
        instance_labels: Some(instance),
    };
    Scene {
        cloud,
        pred: PerPointPrediction { semantic, offsets, fg_prob: Some(fg) },
        npcs,
        poses,
    }
}

/// Writes the scene's files: labelled cloud, prediction and NPCS blobs.
pub fn write_scene(dir: &Path, s: &Scene) {
    ply::write_ply(&dir.join("cloud.ply"), &s.cloud).unwrap();
    let mut channels = PREDICTION_CHANNELS.to_vec();
    channels.push(FG_CHANNEL);
    let fg = s.pred.fg_prob.as_ref().unwrap();
    let rows: Vec<Vec<f64>> = (0..s.cloud.len())
        .map(|i| {
            let o = s.pred.offsets[i];
            vec![f64::from(s.pred.semantic[i]), o.x, o.y, o.z, fg[i]]
        })
        .collect();
    blob::write_blob(&dir.join("pred.bin"), &dir.join("pred.json"), &channels, &rows).unwrap();
    let rows: Vec<Vec<f64>> = s.npcs.iter().map(|v| vec![v.x, v.y, v.z]).collect();
    blob::write_blob(&dir.join("npcs.bin"), &dir.join("npcs.json"), &NPCS_CHANNELS, &rows).unwrap();
}

/// Ground-truth instances with low-foreground points removed: the partition
/// segmentation is expected to recover.
pub fn expected_partition(s: &Scene, fg_thresh: f64) -> Vec<Vec<usize>> {
    let inst = s.cloud.instance_labels.as_ref().unwrap();
    let fg = s.pred.fg_prob.as_ref().unwrap();
    let mut groups: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for i in 0..inst.len() {
        if inst[i] >= 0 && fg[i] >= fg_thresh {
            groups.entry(inst[i]).or_default().push(i);
        }
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort();
    out
}

/// Ground-truth parts keyed to proposal positions: each proposal takes the
/// instance it overlaps most.
pub fn gt_parts_for(s: &Scene, proposals: &ProposalsDoc) -> PartsDoc {
    let inst = s.cloud.instance_labels.as_ref().unwrap();
    let parts = proposals
        .proposals
        .iter()
        .enumerate()
        .map(|(id, p)| {
            let mut votes: BTreeMap<i32, usize> = BTreeMap::new();
            for &i in &p.point_indices {
                *votes.entry(inst[i]).or_default() += 1;
            }
            let (&best, _) = votes.iter().max_by_key(|(k, n)| (**n, -**k)).unwrap();
            let (class, pose) = s.poses[best as usize];
            PartRecord { id, label: class, pose, joint: joint_from_pose(&pose, class), transform: None, num_inliers: None }
        })
        .collect();
    PartsDoc { parts }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Connected components of the radius graph over same-label foreground
/// points, by exhaustive pairwise distances and union-find.
pub fn oracle_components(points: &[Point3<f64>], labels: &[u8], radius: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if labels[i] != 0 && labels[i] == labels[j] && (points[i] - points[j]).norm() <= radius {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut comps: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        if l != 0 {
            let r = find(&mut parent, i);
            comps.entry(r).or_default().push(i);
        }
    }
    comps.into_values().collect()
}

/// Independent re-implementation of grouping, filtering and NMS.
pub fn oracle_segment(cloud: &PointCloud, pred: &PerPointPrediction, g: &GroupingParams, f: &FilterParams) -> Vec<Proposal> {
    let shifted: Vec<Point3<f64>> = cloud.positions.iter().zip(&pred.offsets).map(|(p, o)| p + o).collect();
    let fg = pred.fg_prob.as_deref();
    let mut raw: Vec<Proposal> = Vec::new();
    for coords in [&cloud.positions, &shifted] {
        for comp in oracle_components(coords, &pred.semantic, g.radius) {
            if comp.len() < g.min_points || raw.iter().any(|p| p.point_indices == comp) {
                continue;
            }
            let mut counts = [0usize; 10];
            for &i in &comp {
                counts[usize::from(pred.semantic[i])] += 1;
            }
            let mut best = 1;
            for l in 2..10 {
                if counts[l] > counts[best] {
                    best = l;
                }
            }
            let score = fg.map_or(1.0, |fg| comp.iter().map(|&i| fg[i]).sum::<f64>() / comp.len() as f64);
            raw.push(Proposal::new(comp, PartClass::from_id(best as u8).unwrap(), score));
        }
    }
    let mut cands: Vec<Proposal> = raw
        .into_iter()
        .filter(|p| p.score >= f.score_thresh)
        .map(|p| {
            let kept: Vec<usize> = p.point_indices.iter().copied().filter(|&i| fg.is_none_or(|fg| fg[i] >= f.fg_thresh)).collect();
            Proposal { point_indices: kept, ..p }
        })
        .filter(|p| p.len() >= f.min_points)
        .collect();
    cands.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
    let mut out: Vec<Proposal> = Vec::new();
    for c in cands {
        if out.iter().all(|k| k.point_indices != c.point_indices && index_set_iou(&k.point_indices, &c.point_indices) <= f.nms_iou) {
            out.push(c);
        }
    }
    out
}
