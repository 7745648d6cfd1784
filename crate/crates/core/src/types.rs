//! Shared domain vocabulary: part classes and their symmetry groups, point
//! clouds, poses, similarity transforms, proposals and joint parameters.
//!
//! NPCS coordinates live in `[-0.5, 0.5]^3`: a part's tight bounding box is
//! centred at the origin and uniformly scaled so that its space diagonal has
//! length 1.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The nine actionable part classes. Discriminants are the semantic label ids
/// used in point clouds (0 is background).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartClass {
    LineFixedHandle = 1,
    RoundFixedHandle = 2,
    HingeHandle = 3,
    HingeLid = 4,
    SliderLid = 5,
    SliderButton = 6,
    SliderDrawer = 7,
    HingeDoor = 8,
    HingeKnob = 9,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointKind {
    Revolute,
    Prismatic,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SymmetryType {
    Type1,
    Type2,
    Type3,
    Type4,
    Type5,
}

impl PartClass {
    pub const ALL: [PartClass; 9] = [
        PartClass::LineFixedHandle,
        PartClass::RoundFixedHandle,
        PartClass::HingeHandle,
        PartClass::HingeLid,
        PartClass::SliderLid,
        PartClass::SliderButton,
        PartClass::SliderDrawer,
        PartClass::HingeDoor,
        PartClass::HingeKnob,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<PartClass> {
        PartClass::ALL.get(usize::from(id).checked_sub(1)?).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            PartClass::LineFixedHandle => "line_fixed_handle",
            PartClass::RoundFixedHandle => "round_fixed_handle",
            PartClass::HingeHandle => "hinge_handle",
            PartClass::HingeLid => "hinge_lid",
            PartClass::SliderLid => "slider_lid",
            PartClass::SliderButton => "slider_button",
            PartClass::SliderDrawer => "slider_drawer",
            PartClass::HingeDoor => "hinge_door",
            PartClass::HingeKnob => "hinge_knob",
        }
    }

    /// Abbreviated column name used in segmentation result tables.
    pub fn short_name(self) -> &'static str {
        match self {
            PartClass::LineFixedHandle => "Ln.F.Hl.",
            PartClass::RoundFixedHandle => "Rd.F.Hl.",
            PartClass::HingeHandle => "Hg.Hl.",
            PartClass::HingeLid => "Hg.Ld.",
            PartClass::SliderLid => "Sd.Ld.",
            PartClass::SliderButton => "Sd.Bn.",
            PartClass::SliderDrawer => "Sd.Dw.",
            PartClass::HingeDoor => "Hg.Dr.",
            PartClass::HingeKnob => "Hg.Kb.",
        }
    }

    pub fn symmetry_type(self) -> SymmetryType {
        match self {
            PartClass::LineFixedHandle | PartClass::HingeHandle => SymmetryType::Type1,
            PartClass::HingeDoor | PartClass::HingeLid => SymmetryType::Type2,
            PartClass::SliderButton | PartClass::SliderLid | PartClass::RoundFixedHandle => {
                SymmetryType::Type3
            }
            PartClass::HingeKnob => SymmetryType::Type4,
            PartClass::SliderDrawer => SymmetryType::Type5,
        }
    }

    pub fn joint_kind(self) -> JointKind {
        match self {
            PartClass::HingeHandle
            | PartClass::HingeLid
            | PartClass::HingeDoor
            | PartClass::HingeKnob => JointKind::Revolute,
            PartClass::SliderLid | PartClass::SliderButton | PartClass::SliderDrawer => {
                JointKind::Prismatic
            }
            PartClass::LineFixedHandle | PartClass::RoundFixedHandle => JointKind::Fixed,
        }
    }
}

impl fmt::Display for PartClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PartClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PartClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::input(format!("unknown part class `{s}`")))
    }
}

/// Number of discrete angles used for continuous z symmetry.
pub const Z_SYMMETRY_STEPS: u32 = 12;

/// Discrete symmetry group of a part class, stored as rotation matrices in
/// the part's canonical frame. Every element is in SO(3) and the set is
/// closed under composition.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryGroup {
    pub kind: SymmetryType,
    pub elements: Vec<Matrix3<f64>>,
}

impl SymmetryGroup {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Matrix3<f64>> {
        self.elements.iter()
    }
}

pub fn symmetry_group(class: PartClass) -> SymmetryGroup {
    let kind = class.symmetry_type();
    let z_steps = || (0..Z_SYMMETRY_STEPS).map(|k| rot_z_deg(f64::from(k * 30)));
    let elements = match kind {
        SymmetryType::Type1 => vec![Matrix3::identity(), rot_z_deg(180.0)],
        SymmetryType::Type2 => vec![Matrix3::identity(), rot_y_deg(180.0)],
        SymmetryType::Type3 => {
            // 12 z rotations, then the same set composed with the x-y flip
            // (half turn about x).
            let flip = rot_x_deg(180.0);
            z_steps().chain(z_steps().map(|r| r * flip)).collect()
        }
        SymmetryType::Type4 => z_steps().collect(),
        SymmetryType::Type5 => vec![Matrix3::identity()],
    };
    SymmetryGroup { kind, elements }
}

/// `(cos, sin)` of an angle in degrees, exact at multiples of 90.
fn cos_sin_deg(deg: f64) -> (f64, f64) {
    let turns = deg / 90.0;
    if turns.fract() == 0.0 {
        match (turns as i64).rem_euclid(4) {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        }
    } else {
        let r = deg.to_radians();
        (r.cos(), r.sin())
    }
}

pub fn rot_x_deg(deg: f64) -> Matrix3<f64> {
    let (c, s) = cos_sin_deg(deg);
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y_deg(deg: f64) -> Matrix3<f64> {
    let (c, s) = cos_sin_deg(deg);
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z_deg(deg: f64) -> Matrix3<f64> {
    let (c, s) = cos_sin_deg(deg);
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rotation angle of a rotation matrix, in radians.
///
/// Uses `atan2(|vee(M - M^T)| / 2, (tr M - 1) / 2)`, which stays accurate near
/// zero where `acos` of the trace loses half the significant digits.
pub fn rotation_angle(m: &Matrix3<f64>) -> f64 {
    let sin_vec = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    let s = 0.5 * sin_vec.norm();
    let c = 0.5 * (m.trace() - 1.0);
    s.atan2(c)
}

/// Angle between two rotations, in radians.
pub fn rotation_distance(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    rotation_angle(&(a * b.transpose()))
}

pub fn is_rotation(m: &Matrix3<f64>, tol: f64) -> bool {
    let ortho = (m.transpose() * m - Matrix3::identity()).abs().max();
    ortho <= tol && (m.determinant() - 1.0).abs() <= tol
}

/// Point cloud with optional per-point channels. All present channels have
/// the same length as `positions`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub positions: Vec<Point3<f64>>,
    /// RGB in `[0, 1]`.
    pub colors: Option<Vec<[f64; 3]>>,
    /// 0 is background, 1..=9 are [`PartClass`] ids.
    pub semantic_labels: Option<Vec<u8>>,
    /// -1 is background.
    pub instance_labels: Option<Vec<i32>>,
}

impl PointCloud {
    pub fn from_positions(positions: Vec<Point3<f64>>) -> Result<Self> {
        let cloud = PointCloud {
            positions,
            ..Default::default()
        };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        if let Some(i) = self
            .positions
            .iter()
            .position(|p| !p.coords.iter().all(|v| v.is_finite()))
        {
            return Err(Error::input(format!("point {i} has a non-finite coordinate")));
        }
        let check = |name: &str, len: Option<usize>| match len {
            Some(l) if l != n => Err(Error::input(format!(
                "{name} channel has {l} entries, cloud has {n} points"
            ))),
            _ => Ok(()),
        };
        check("color", self.colors.as_ref().map(Vec::len))?;
        check("semantic label", self.semantic_labels.as_ref().map(Vec::len))?;
        check("instance label", self.instance_labels.as_ref().map(Vec::len))?;
        if let Some(sem) = &self.semantic_labels {
            if let Some(bad) = sem.iter().find(|&&l| l > 9) {
                return Err(Error::input(format!("semantic label {bad} out of range 0..=9")));
            }
        }
        Ok(())
    }

    /// Gathers the points at `indices`, carrying every channel along.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        fn pick<T: Copy>(v: &[T], idx: &[usize]) -> Vec<T> {
            idx.iter().map(|&i| v[i]).collect()
        }
        PointCloud {
            positions: pick(&self.positions, indices),
            colors: self.colors.as_deref().map(|c| pick(c, indices)),
            semantic_labels: self.semantic_labels.as_deref().map(|c| pick(c, indices)),
            instance_labels: self.instance_labels.as_deref().map(|c| pick(c, indices)),
        }
    }
}

/// Oriented tight bounding box of a part: `rotation` maps canonical axes to
/// the camera frame, `translation` is the box centre, `size` the extents along
/// the canonical x, y, z axes (all in metres).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartPose {
    #[serde(with = "row_major")]
    pub rotation: Matrix3<f64>,
    #[serde(with = "vec3")]
    pub translation: Vector3<f64>,
    #[serde(with = "vec3")]
    pub size: Vector3<f64>,
}

impl PartPose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>, size: Vector3<f64>) -> Result<Self> {
        let pose = PartPose {
            rotation,
            translation,
            size,
        };
        pose.validate()?;
        Ok(pose)
    }

    pub fn validate(&self) -> Result<()> {
        if !is_rotation(&self.rotation, 1e-9) {
            return Err(Error::input("pose rotation is not in SO(3)"));
        }
        if !self.translation.iter().all(|v| v.is_finite()) {
            return Err(Error::input("pose translation is not finite"));
        }
        if !self.size.iter().all(|&v| v.is_finite() && v > 0.0) {
            return Err(Error::input("pose size components must be positive"));
        }
        Ok(())
    }

    /// Maps a point given in the box's local metric frame to the camera frame.
    pub fn to_world(&self, local: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * local + self.translation
    }

    /// Applies the rigid motion `x -> q x + u` to the box.
    pub fn transformed(&self, q: &Matrix3<f64>, u: &Vector3<f64>) -> PartPose {
        PartPose {
            rotation: q * self.rotation,
            translation: q * self.translation + u,
            size: self.size,
        }
    }

    /// The eight box corners in the camera frame.
    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let h = self.size * 0.5;
        let mut out = [Vector3::zeros(); 8];
        for (i, c) in out.iter_mut().enumerate() {
            let sx = if i & 1 == 0 { -h.x } else { h.x };
            let sy = if i & 2 == 0 { -h.y } else { h.y };
            let sz = if i & 4 == 0 { -h.z } else { h.z };
            *c = self.to_world(&Vector3::new(sx, sy, sz));
        }
        out
    }

    pub fn volume(&self) -> f64 {
        self.size.x * self.size.y * self.size.z
    }
}

/// `x -> scale * rotation * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    #[serde(with = "row_major")]
    pub rotation: Matrix3<f64>,
    #[serde(with = "vec3")]
    pub translation: Vector3<f64>,
    pub scale: f64,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        SimilarityTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            scale: 1.0,
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * p) + self.translation
    }

    pub fn inverse(&self) -> SimilarityTransform {
        let rt = self.rotation.transpose();
        let inv_s = 1.0 / self.scale;
        SimilarityTransform {
            rotation: rt,
            translation: -(rt * self.translation) * inv_s,
            scale: inv_s,
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &SimilarityTransform) -> SimilarityTransform {
        SimilarityTransform {
            rotation: self.rotation * other.rotation,
            translation: self.apply(&other.translation),
            scale: self.scale * other.scale,
        }
    }
}

/// Candidate part instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    /// Sorted, unique indices into the owning cloud.
    #[serde(rename = "indices")]
    pub point_indices: Vec<usize>,
    #[serde(rename = "label")]
    pub semantic_label: PartClass,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_label: Option<usize>,
}

impl Proposal {
    pub fn new(mut point_indices: Vec<usize>, semantic_label: PartClass, score: f64) -> Self {
        point_indices.sort_unstable();
        point_indices.dedup();
        Proposal {
            point_indices,
            semantic_label,
            score,
            domain_label: None,
        }
    }

    pub fn len(&self) -> usize {
        self.point_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point_indices.is_empty()
    }

    pub fn validate(&self, n_points: usize) -> Result<()> {
        if !self.score.is_finite() {
            return Err(Error::input("proposal score is not finite"));
        }
        if self.point_indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::input("proposal indices must be sorted and unique"));
        }
        if let Some(&last) = self.point_indices.last() {
            if last >= n_points {
                return Err(Error::input(format!(
                    "proposal index {last} out of range for {n_points} points"
                )));
            }
        }
        Ok(())
    }
}

/// Intersection over union of two sorted index sets.
pub fn index_set_iou(a: &[usize], b: &[usize]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Articulation derived from a part pose. `pivot` is set for revolute joints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointParams {
    pub kind: JointKind,
    #[serde(with = "vec3")]
    pub axis_direction: Vector3<f64>,
    #[serde(default, with = "opt_vec3", skip_serializing_if = "Option::is_none")]
    pub pivot: Option<Vector3<f64>>,
}

impl JointParams {
    pub fn validate(&self) -> Result<()> {
        if (self.axis_direction.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::input("joint axis must be a unit vector"));
        }
        if self.kind == JointKind::Revolute && self.pivot.is_none() {
            return Err(Error::input("revolute joint requires a pivot"));
        }
        Ok(())
    }

    /// Applies the rigid motion `x -> q x + u` to the joint.
    pub fn transformed(&self, q: &Matrix3<f64>, u: &Vector3<f64>) -> JointParams {
        JointParams {
            kind: self.kind,
            axis_direction: q * self.axis_direction,
            pivot: self.pivot.map(|p| q * p + u),
        }
    }
}

/// Serde helpers: matrices as row-major 9-arrays, vectors as 3-arrays.
pub(crate) mod row_major {
    use nalgebra::Matrix3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Matrix3<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: [f64; 9] = std::array::from_fn(|k| m[(k / 3, k % 3)]);
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix3<f64>, D::Error> {
        let v = <[f64; 9]>::deserialize(d)?;
        Ok(Matrix3::from_row_slice(&v))
    }
}

pub(crate) mod vec3 {
    use nalgebra::Vector3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vector3<f64>, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y, v.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector3<f64>, D::Error> {
        let v = <[f64; 3]>::deserialize(d)?;
        Ok(Vector3::from(v))
    }
}

pub(crate) mod opt_vec3 {
    use nalgebra::Vector3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vector3<f64>>, s: S) -> Result<S::Ok, S::Error> {
        v.map(|v| [v.x, v.y, v.z]).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vector3<f64>>, D::Error> {
        Ok(Option::<[f64; 3]>::deserialize(d)?.map(Vector3::from))
    }
}
