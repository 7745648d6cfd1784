//! Volume IoU of oriented boxes.
//!
//! The intersection of two boxes is a convex polyhedron, obtained by clipping
//! the faces of one box against the six half-spaces of the other. A stratified
//! sampling estimate is used when the clipped result is not trustworthy.

use nalgebra::Vector3;

use crate::types::PartPose;

/// Stratified samples per axis for the sampling route (47^3 ≈ 100k).
pub const SAMPLES_PER_AXIS: usize = 47;

const PLANE_EPS: f64 = 1e-12;

type Polygon = Vec<Vector3<f64>>;

/// Outward half-spaces `n · x <= d` bounding a box.
fn half_spaces(b: &PartPose) -> [(Vector3<f64>, f64); 6] {
    let mut out = [(Vector3::zeros(), 0.0); 6];
    for axis in 0..3 {
        let n = b.rotation.column(axis).into_owned();
        let c = n.dot(&b.translation);
        let h = 0.5 * b.size[axis];
        out[2 * axis] = (n, c + h);
        out[2 * axis + 1] = (-n, -c + h);
    }
    out
}

fn box_faces(b: &PartPose) -> Vec<Polygon> {
    let c = b.corners();
    // corner index bits: x = 1, y = 2, z = 4
    const FACES: [[usize; 4]; 6] = [
        [0, 2, 6, 4],
        [1, 5, 7, 3],
        [0, 4, 5, 1],
        [2, 3, 7, 6],
        [0, 1, 3, 2],
        [4, 6, 7, 5],
    ];
    FACES.iter().map(|f| f.iter().map(|&i| c[i]).collect()).collect()
}

/// Clips a convex polyhedron (as faces) by `n · x <= d`, closing the cut with
/// a cap polygon.
fn clip(faces: Vec<Polygon>, n: &Vector3<f64>, d: f64) -> Vec<Polygon> {
    let mut out = Vec::with_capacity(faces.len() + 1);
    let mut cap: Vec<Vector3<f64>> = Vec::new();
    let mut has_coplanar_face = false;
    for face in faces {
        if face.iter().all(|p| (n.dot(p) - d).abs() <= PLANE_EPS) {
            // The plane supports this face; it already closes the solid.
            has_coplanar_face = true;
            out.push(face);
            continue;
        }
        let mut poly = Vec::with_capacity(face.len() + 2);
        for i in 0..face.len() {
            let a = face[i];
            let b = face[(i + 1) % face.len()];
            let da = n.dot(&a) - d;
            let db = n.dot(&b) - d;
            if da <= PLANE_EPS {
                poly.push(a);
                if da.abs() <= PLANE_EPS {
                    cap.push(a);
                }
            }
            if (da < -PLANE_EPS && db > PLANE_EPS) || (da > PLANE_EPS && db < -PLANE_EPS) {
                let p = a + (b - a) * (da / (da - db));
                poly.push(p);
                cap.push(p);
            }
        }
        if poly.len() >= 3 {
            out.push(poly);
        }
    }
    if !has_coplanar_face {
        if let Some(cap) = order_cap(cap, n) {
            out.push(cap);
        }
    }
    out
}

/// Deduplicates coplanar points and orders them by angle about their centroid.
fn order_cap(mut pts: Vec<Vector3<f64>>, n: &Vector3<f64>) -> Option<Polygon> {
    let mut uniq: Vec<Vector3<f64>> = Vec::new();
    for p in pts.drain(..) {
        if !uniq.iter().any(|q| (q - p).norm() <= 1e-10) {
            uniq.push(p);
        }
    }
    if uniq.len() < 3 {
        return None;
    }
    let centroid = uniq.iter().sum::<Vector3<f64>>() / uniq.len() as f64;
    let seed = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let u = n.cross(&seed).normalize();
    let v = n.cross(&u);
    uniq.sort_by(|a, b| {
        let (pa, pb) = (a - centroid, b - centroid);
        pa.dot(&v).atan2(pa.dot(&u)).total_cmp(&pb.dot(&v).atan2(pb.dot(&u)))
    });
    Some(uniq)
}

fn polyhedron_volume(faces: &[Polygon]) -> f64 {
    let verts: Vec<&Vector3<f64>> = faces.iter().flatten().collect();
    if verts.is_empty() {
        return 0.0;
    }
    let inner = verts.iter().copied().sum::<Vector3<f64>>() / verts.len() as f64;
    faces
        .iter()
        .map(|f| {
            // fan area vector; orientation-agnostic height from the interior point
            let area_vec = (1..f.len() - 1).fold(Vector3::zeros(), |acc, i| acc + (f[i] - f[0]).cross(&(f[i + 1] - f[0])));
            let area2 = area_vec.norm();
            if area2 == 0.0 {
                return 0.0;
            }
            let h = (area_vec / area2).dot(&(f[0] - inner)).abs();
            area2 * 0.5 * h / 3.0
        })
        .sum()
}

/// Exact intersection volume by half-space clipping; `None` when the result
/// is numerically implausible.
pub fn intersection_volume_exact(a: &PartPose, b: &PartPose) -> Option<f64> {
    let mut faces = box_faces(a);
    for (n, d) in half_spaces(b) {
        faces = clip(faces, &n, d);
        if faces.len() < 4 {
            return Some(0.0);
        }
    }
    let v = polyhedron_volume(&faces);
    let bound = a.volume().min(b.volume());
    (v.is_finite() && v >= 0.0 && v <= bound * (1.0 + 1e-9)).then_some(v.min(bound))
}

fn contains(b: &PartPose, p: &Vector3<f64>) -> bool {
    let local = b.rotation.transpose() * (p - b.translation);
    (0..3).all(|k| local[k].abs() <= 0.5 * b.size[k])
}

/// Stratified sampling estimate of the intersection volume over the union's
/// axis-aligned bounding box.
pub fn intersection_volume_sampled(a: &PartPose, b: &PartPose, per_axis: usize) -> f64 {
    let corners: Vec<Vector3<f64>> = a.corners().into_iter().chain(b.corners()).collect();
    let lo = corners.iter().fold(corners[0], |m, c| m.inf(c));
    let hi = corners.iter().fold(corners[0], |m, c| m.sup(c));
    let step = (hi - lo) / per_axis as f64;
    let mut hits = 0usize;
    for i in 0..per_axis {
        for j in 0..per_axis {
            for k in 0..per_axis {
                let p = lo + Vector3::new(
                    (i as f64 + 0.5) * step.x,
                    (j as f64 + 0.5) * step.y,
                    (k as f64 + 0.5) * step.z,
                );
                if contains(a, &p) && contains(b, &p) {
                    hits += 1;
                }
            }
        }
    }
    hits as f64 * step.x * step.y * step.z
}

fn iou_from_intersection(a: &PartPose, b: &PartPose, inter: f64) -> f64 {
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Volume IoU of two oriented boxes.
pub fn box_iou(a: &PartPose, b: &PartPose) -> f64 {
    let inter = intersection_volume_exact(a, b)
        .unwrap_or_else(|| intersection_volume_sampled(a, b, SAMPLES_PER_AXIS));
    iou_from_intersection(a, b, inter)
}

/// Sampling-only IoU, kept as an independent cross-check.
pub fn box_iou_sampled(a: &PartPose, b: &PartPose, per_axis: usize) -> f64 {
    iou_from_intersection(a, b, intersection_volume_sampled(a, b, per_axis))
}
