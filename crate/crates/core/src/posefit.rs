//! Part pose recovery from predicted NPCS coordinates.
//!
//! A similarity transform between NPCS coordinates and observed camera-frame
//! points is estimated in closed form (Umeyama), wrapped in RANSAC for outlier
//! rejection, and turned into an oriented bounding box plus joint parameters.

use nalgebra::{Matrix3, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{
    rotation_angle, symmetry_group, JointKind, JointParams, PartClass, PartPose, SimilarityTransform,
    SymmetryType,
};

/// Transition point of the soft-L1 loss, in NPCS units.
pub const SOFT_L1_DELTA: f64 = 0.1;

/// Smallest per-axis NPCS extent used when building a box, so that planar
/// predictions still yield a positive size.
const MIN_NPCS_EXTENT: f64 = 1e-6;

/// Per-point canonical coordinates of one part, inside `[-0.5, 0.5]^3`.
#[derive(Debug, Clone, PartialEq)]
pub struct NpcsMap {
    pub coords: Vec<Vector3<f64>>,
}

impl NpcsMap {
    /// Checks every coordinate against the unit cube, allowing `eps` slack.
    pub fn new(coords: Vec<Vector3<f64>>, eps: f64) -> Result<Self> {
        let limit = 0.5 + eps;
        if let Some(i) = coords
            .iter()
            .position(|c| !c.iter().all(|v| v.is_finite() && v.abs() <= limit))
        {
            return Err(Error::input(format!("NPCS coordinate {i} lies outside [-0.5, 0.5]^3")));
        }
        Ok(NpcsMap { coords })
    }
}

/// Maps points given in a part's canonical (metric) frame into NPCS: centred
/// on the bounding box and scaled so the box diagonal has length 1. Returns
/// the coordinates, the box centre and the diagonal length.
pub fn normalize_to_npcs(local: &[Vector3<f64>]) -> Result<(Vec<Vector3<f64>>, Vector3<f64>, f64)> {
    let (lo, hi) = bounds(local).ok_or_else(|| Error::input("empty point set"))?;
    let center = (lo + hi) * 0.5;
    let diag = (hi - lo).norm();
    if !(diag > 0.0) {
        return Err(Error::input("point set has zero extent"));
    }
    Ok((local.iter().map(|p| (p - center) / diag).collect(), center, diag))
}

fn bounds(points: &[Vector3<f64>]) -> Option<(Vector3<f64>, Vector3<f64>)> {
    let first = *points.first()?;
    Some(points.iter().fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))))
}

/// Closed-form least-squares similarity transform with `dst ≈ s R src + t`.
///
/// `R` is constrained to SO(3) by flipping the sign of the weakest singular
/// direction when the covariance has negative determinant.
pub fn umeyama(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Result<SimilarityTransform> {
    if src.len() != dst.len() {
        return Err(Error::input(format!(
            "{} source points but {} destination points",
            src.len(),
            dst.len()
        )));
    }
    let m = src.len();
    if m < 3 {
        return Err(Error::fit(format!("need at least 3 correspondences, got {m}")));
    }
    let inv_m = 1.0 / m as f64;
    let mu_src = src.iter().sum::<Vector3<f64>>() * inv_m;
    let mu_dst = dst.iter().sum::<Vector3<f64>>() * inv_m;

    let mut cov = Matrix3::zeros();
    let mut var_src = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let sc = s - mu_src;
        let dc = d - mu_dst;
        cov += dc * sc.transpose();
        var_src += sc.norm_squared();
    }
    cov *= inv_m;
    var_src *= inv_m;

    let svd = cov.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::fit("SVD did not converge")),
    };
    let sv = svd.singular_values;
    let max_sv = sv.max();
    let rank = sv.iter().filter(|&&x| x > 1e-12 * max_sv).count();
    if !(var_src > 0.0) || !(max_sv > 0.0) || rank < 2 {
        return Err(Error::fit("degenerate correspondences (covariance rank < 2)"));
    }

    let mut signs = Vector3::repeat(1.0);
    if u.determinant() * v_t.determinant() < 0.0 {
        signs[sv.imin()] = -1.0;
    }
    let rotation = u * Matrix3::from_diagonal(&signs) * v_t;
    let scale = sv.dot(&signs) / var_src;
    if !(scale > 0.0) {
        return Err(Error::fit("non-positive scale"));
    }
    let translation = mu_dst - scale * (rotation * mu_src);
    Ok(SimilarityTransform {
        rotation,
        translation,
        scale,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InlierThreshold {
    /// Residual bound in metres.
    Absolute(f64),
    /// Fraction of the hypothesis' fitted bounding-box diagonal.
    Relative(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RansacConfig {
    pub iterations: usize,
    pub threshold: InlierThreshold,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig {
            iterations: 100,
            threshold: InlierThreshold::Relative(0.05),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacFit {
    pub transform: SimilarityTransform,
    /// Consensus set of the best hypothesis.
    pub inliers: Vec<bool>,
    pub num_inliers: usize,
}

/// RANSAC around [`umeyama`] with minimal samples of three correspondences.
///
/// Trial `i` draws its sample from a ChaCha8 stream keyed by `(seed, i)`. The
/// hypothesis with the most inliers wins (first on ties); the returned
/// transform is refit on its consensus set.
pub fn ransac_umeyama(src: &[Vector3<f64>], dst: &[Vector3<f64>], cfg: &RansacConfig) -> Result<RansacFit> {
    if src.len() != dst.len() {
        return Err(Error::input("source and destination lengths differ"));
    }
    let m = src.len();
    if m < 3 {
        return Err(Error::fit(format!("need at least 3 correspondences, got {m}")));
    }
    let src_diag = bounds(src).map(|(lo, hi)| (hi - lo).norm()).unwrap_or(0.0);

    let mut best: Option<(SimilarityTransform, Vec<bool>, usize)> = None;
    for trial in 0..cfg.iterations {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(trial as u64);
        let idx = sample(&mut rng, m, 3);
        let s: Vec<_> = idx.iter().map(|i| src[i]).collect();
        let d: Vec<_> = idx.iter().map(|i| dst[i]).collect();
        let Ok(hyp) = umeyama(&s, &d) else {
            continue;
        };
        let thresh = match cfg.threshold {
            InlierThreshold::Absolute(t) => t,
            InlierThreshold::Relative(f) => f * hyp.scale * src_diag,
        };
        let mask: Vec<bool> = src
            .iter()
            .zip(dst)
            .map(|(s, d)| (d - hyp.apply(s)).norm() < thresh)
            .collect();
        let count = mask.iter().filter(|&&b| b).count();
        if best.as_ref().is_none_or(|b| count > b.2) {
            best = Some((hyp, mask, count));
        }
    }

    let (hyp, inliers, num_inliers) = best.ok_or_else(|| Error::fit("no non-degenerate hypothesis"))?;
    if num_inliers < 3 {
        return Err(Error::fit(format!("best model has only {num_inliers} inliers")));
    }
    let (s, d): (Vec<_>, Vec<_>) = src
        .iter()
        .zip(dst)
        .zip(&inliers)
        .filter(|(_, &keep)| keep)
        .map(|((s, d), _)| (*s, *d))
        .unzip();
    let transform = umeyama(&s, &d).unwrap_or(hyp);
    Ok(RansacFit {
        transform,
        inliers,
        num_inliers,
    })
}

/// Oriented box of the NPCS points mapped through `t`.
pub fn pose_from_fit(t: &SimilarityTransform, npcs: &[Vector3<f64>]) -> Result<PartPose> {
    let (lo, hi) = bounds(npcs).ok_or_else(|| Error::input("empty NPCS map"))?;
    let center = (lo + hi) * 0.5;
    let extent = (hi - lo).map(|e| e.max(MIN_NPCS_EXTENT));
    PartPose::new(
        t.rotation,
        t.translation + t.scale * (t.rotation * center),
        extent * t.scale,
    )
}

/// Like [`pose_from_fit`], but for classes with continuous z symmetry the
/// rotation is first replaced by the symmetric equivalent closest to the
/// identity, with the NPCS points re-expressed in that frame.
pub fn canonical_pose_from_fit(t: &SimilarityTransform, npcs: &[Vector3<f64>], class: PartClass) -> Result<PartPose> {
    let group = symmetry_group(class);
    if !matches!(group.kind, SymmetryType::Type3 | SymmetryType::Type4) {
        return pose_from_fit(t, npcs);
    }
    let g = group
        .iter()
        .min_by(|a, b| rotation_angle(&(t.rotation * *a)).total_cmp(&rotation_angle(&(t.rotation * *b))))
        .copied()
        .unwrap_or_else(Matrix3::identity);
    let g_t = g.transpose();
    let rotated: Vec<_> = npcs.iter().map(|p| g_t * p).collect();
    let canon = SimilarityTransform {
        rotation: t.rotation * g,
        ..*t
    };
    pose_from_fit(&canon, &rotated)
}

/// Soft-L1 (Huber-style) penalty on a single residual.
pub fn soft_l1(e: f64, delta: f64) -> f64 {
    let a = e.abs();
    if a < delta {
        0.5 * a * a / delta
    } else {
        a - 0.5 * delta
    }
}

/// Mean per-coordinate soft-L1 between `pred` and `g · gt`, minimised over the
/// class' symmetry group. Returns the loss and the index of the minimising
/// group element.
pub fn symmetry_aware_npcs_loss_argmin(
    pred: &[Vector3<f64>],
    gt: &[Vector3<f64>],
    class: PartClass,
) -> Result<(f64, usize)> {
    if pred.len() != gt.len() {
        return Err(Error::input("predicted and ground-truth NPCS maps differ in length"));
    }
    if pred.is_empty() {
        return Ok((0.0, 0));
    }
    let denom = 3.0 * pred.len() as f64;
    let mut best = (f64::INFINITY, 0);
    for (k, g) in symmetry_group(class).iter().enumerate() {
        let total: f64 = pred
            .iter()
            .zip(gt)
            .map(|(p, q)| {
                let r = p - g * q;
                r.iter().map(|&e| soft_l1(e, SOFT_L1_DELTA)).sum::<f64>()
            })
            .sum();
        let loss = total / denom;
        if loss < best.0 {
            best = (loss, k);
        }
    }
    Ok(best)
}

pub fn symmetry_aware_npcs_loss(pred: &[Vector3<f64>], gt: &[Vector3<f64>], class: PartClass) -> Result<f64> {
    symmetry_aware_npcs_loss_argmin(pred, gt, class).map(|(l, _)| l)
}

/// Joint parameters implied by a part pose.
///
/// | class                       | kind      | axis (canonical) | pivot (box-local)     |
/// |-----------------------------|-----------|------------------|-----------------------|
/// | slider lid / button / drawer| prismatic | +z               | none                  |
/// | hinge door / lid            | revolute  | +y               | (-size_x / 2, 0, 0)   |
/// | hinge knob / handle         | revolute  | +z               | box centre            |
/// | line / round fixed handle   | fixed     | +z (approach)    | none                  |
pub fn joint_from_pose(pose: &PartPose, class: PartClass) -> JointParams {
    let r = &pose.rotation;
    let axis = |col: usize| r.column(col).into_owned().normalize();
    match class {
        PartClass::SliderLid | PartClass::SliderButton | PartClass::SliderDrawer => JointParams {
            kind: JointKind::Prismatic,
            axis_direction: axis(2),
            pivot: None,
        },
        PartClass::HingeDoor | PartClass::HingeLid => JointParams {
            kind: JointKind::Revolute,
            axis_direction: axis(1),
            pivot: Some(pose.to_world(&Vector3::new(-0.5 * pose.size.x, 0.0, 0.0))),
        },
        PartClass::HingeKnob | PartClass::HingeHandle => JointParams {
            kind: JointKind::Revolute,
            axis_direction: axis(2),
            pivot: Some(pose.translation),
        },
        PartClass::LineFixedHandle | PartClass::RoundFixedHandle => JointParams {
            kind: JointKind::Fixed,
            axis_direction: axis(2),
            pivot: None,
        },
    }
}

/// Everything recovered for one part.
#[derive(Debug, Clone, PartialEq)]
pub struct PartFit {
    pub transform: SimilarityTransform,
    pub pose: PartPose,
    pub joint: JointParams,
    pub inliers: Vec<bool>,
    pub num_inliers: usize,
}

/// RANSAC fit, canonical box extraction over the inliers, and joint derivation.
pub fn fit_part(points: &[Vector3<f64>], npcs: &[Vector3<f64>], class: PartClass, cfg: &RansacConfig) -> Result<PartFit> {
    let fit = ransac_umeyama(npcs, points, cfg)?;
    let inlier_npcs: Vec<_> = npcs
        .iter()
        .zip(&fit.inliers)
        .filter(|(_, &k)| k)
        .map(|(p, _)| *p)
        .collect();
    let pose = canonical_pose_from_fit(&fit.transform, &inlier_npcs, class)?;
    let joint = joint_from_pose(&pose, class);
    Ok(PartFit {
        transform: fit.transform,
        pose,
        joint,
        inliers: fit.inliers,
        num_inliers: fit.num_inliers,
    })
}
