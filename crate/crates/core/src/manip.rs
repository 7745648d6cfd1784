//! Pose-driven grasp selection and kinematic actuation trajectories.
//!
//! Conventions follow the canonical part frame: `+z` faces away from the
//! object, so grippers approach along `-R·z`; hinge doors and lids turn about
//! their `y` edge at `x = -size_x / 2`, which puts the free edge at
//! `x = +size_x / 2`.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{vec3, JointKind, JointParams, PartClass, PartPose};

/// Interpolation time step, seconds.
pub const DEFAULT_DT: f64 = 1.0 / 250.0;
pub const DEFAULT_LINEAR_SPEED: f64 = 0.1;
pub const DEFAULT_ANGULAR_SPEED_DEG: f64 = 30.0;
/// Distance before contact at which the approach starts, meters.
pub const DEFAULT_STANDOFF: f64 = 0.1;
/// Extra opening beyond the grasped box dimension, meters.
pub const DEFAULT_APERTURE_MARGIN: f64 = 0.02;
/// Fraction of the motion range that counts as a successful actuation.
pub const SUCCESS_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperPose {
    #[serde(with = "vec3")]
    pub position: Vector3<f64>,
    /// Direction of travel towards the contact.
    #[serde(with = "vec3")]
    pub approach_dir: Vector3<f64>,
    /// Direction along which the fingers close.
    #[serde(with = "vec3")]
    pub closing_dir: Vector3<f64>,
    /// Finger opening, meters; zero for a closed gripper.
    pub aperture: f64,
}

impl GripperPose {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: &Vector3<f64>| (v.norm() - 1.0).abs() <= 1e-6;
        if !unit(&self.approach_dir) || !unit(&self.closing_dir) {
            return Err(Error::input("gripper directions must be unit vectors"));
        }
        if self.approach_dir.dot(&self.closing_dir).abs() > 1e-6 {
            return Err(Error::input("approach and closing directions must be perpendicular"));
        }
        if !(self.aperture >= 0.0) || !self.position.iter().all(|v| v.is_finite()) {
            return Err(Error::input("gripper position and aperture must be finite, aperture non-negative"));
        }
        Ok(())
    }

    /// Applies the rigid motion `x -> q x + u`.
    pub fn transformed(&self, q: &Matrix3<f64>, u: &Vector3<f64>) -> GripperPose {
        GripperPose {
            position: q * self.position + u,
            approach_dir: q * self.approach_dir,
            closing_dir: q * self.closing_dir,
            aperture: self.aperture,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawerIntent {
    /// Pull the drawer out.
    #[default]
    Open,
    /// Reach into an open drawer.
    Fetch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspOptions {
    pub margin: f64,
    pub drawer_intent: DrawerIntent,
    /// A handle on the part, grasped instead of the part itself.
    pub handle: Option<(PartPose, PartClass)>,
}

impl Default for GraspOptions {
    fn default() -> Self {
        GraspOptions {
            margin: DEFAULT_APERTURE_MARGIN,
            drawer_intent: DrawerIntent::Open,
            handle: None,
        }
    }
}

/// [`grasp_pose_with`] under default options.
pub fn grasp_pose(pose: &PartPose, class: PartClass) -> GripperPose {
    grasp_pose_with(pose, class, &GraspOptions::default())
}

pub fn grasp_pose_with(pose: &PartPose, class: PartClass, opts: &GraspOptions) -> GripperPose {
    let r = &pose.rotation;
    let (x, y, z) = (r.column(0).into_owned(), r.column(1).into_owned(), r.column(2).into_owned());
    let s = pose.size;
    let margin = opts.margin;
    // free edge at +x, clamped across the part's thickness
    let clamp_edge = || GripperPose {
        position: pose.to_world(&Vector3::new(0.5 * s.x, 0.0, 0.0)),
        approach_dir: -x,
        closing_dir: z,
        aperture: s.z + margin,
    };
    match class {
        PartClass::RoundFixedHandle | PartClass::HingeKnob => GripperPose {
            position: pose.translation,
            approach_dir: -z,
            closing_dir: x,
            aperture: s.x.max(s.y) + margin,
        },
        PartClass::LineFixedHandle | PartClass::HingeHandle => GripperPose {
            position: pose.translation,
            approach_dir: -z,
            closing_dir: y,
            aperture: s.y + margin,
        },
        PartClass::SliderButton => GripperPose {
            position: pose.to_world(&Vector3::new(0.0, 0.0, 0.5 * s.z)),
            approach_dir: -z,
            closing_dir: x,
            aperture: 0.0,
        },
        PartClass::SliderDrawer | PartClass::HingeDoor | PartClass::HingeLid | PartClass::SliderLid
            if opts.handle.is_some() =>
        {
            let (handle, handle_class) = opts.handle.expect("checked above");
            let fallback = match handle_class {
                PartClass::RoundFixedHandle | PartClass::HingeKnob => PartClass::RoundFixedHandle,
                _ => PartClass::LineFixedHandle,
            };
            grasp_pose_with(&handle, fallback, &GraspOptions { handle: None, ..*opts })
        }
        PartClass::SliderDrawer => match opts.drawer_intent {
            DrawerIntent::Open => clamp_edge(),
            DrawerIntent::Fetch => GripperPose {
                position: pose.translation,
                approach_dir: -z,
                closing_dir: y,
                aperture: s.y.min(s.x) + margin,
            },
        },
        PartClass::HingeDoor | PartClass::HingeLid | PartClass::SliderLid => clamp_edge(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Approach,
    Grasp,
    Actuate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub waypoints: Vec<GripperPose>,
    /// One tag per waypoint.
    pub phases: Vec<Phase>,
    pub dt: f64,
}

impl Trajectory {
    /// Waypoints of one phase, in order.
    pub fn phase(&self, phase: Phase) -> impl Iterator<Item = &GripperPose> {
        self.waypoints.iter().zip(&self.phases).filter(move |(_, p)| **p == phase).map(|(w, _)| w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub dt: f64,
    /// Meters per second, for the approach and prismatic actuation.
    pub linear_speed: f64,
    /// Degrees per second, for revolute actuation.
    pub angular_speed_deg: f64,
    pub standoff: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        TrajectoryConfig {
            dt: DEFAULT_DT,
            linear_speed: DEFAULT_LINEAR_SPEED,
            angular_speed_deg: DEFAULT_ANGULAR_SPEED_DEG,
            standoff: DEFAULT_STANDOFF,
        }
    }
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.dt) || !pos(self.linear_speed) || !pos(self.angular_speed_deg) {
            return Err(Error::Config("dt and speeds must be positive".into()));
        }
        if !(self.standoff.is_finite() && self.standoff >= 0.0) {
            return Err(Error::Config("standoff must be non-negative".into()));
        }
        Ok(())
    }

    fn steps(&self, duration: f64) -> usize {
        ((duration / self.dt).ceil() as usize).max(1)
    }
}

/// Approach from the standoff, contact, then motion along the joint.
///
/// `motion_range` is meters for prismatic joints and radians for revolute
/// ones. Actuation waypoint `k` of `n` sits at fraction `k / n` of the range.
pub fn actuation_trajectory(
    grasp: &GripperPose,
    joint: &JointParams,
    motion_range: f64,
    cfg: &TrajectoryConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    if joint.kind == JointKind::Fixed {
        return Err(Error::Policy("a fixed part cannot be actuated".into()));
    }
    if !(motion_range > 0.0 && motion_range.is_finite()) {
        return Err(Error::Policy(format!("motion range must be positive, got {motion_range}")));
    }
    joint.validate()?;

    let mut waypoints = Vec::new();
    let mut phases = Vec::new();
    if cfg.standoff > 0.0 {
        let start = grasp.position - grasp.approach_dir * cfg.standoff;
        let n = cfg.steps(cfg.standoff / cfg.linear_speed);
        for k in 0..n {
            let f = k as f64 / n as f64;
            waypoints.push(GripperPose {
                position: start + (grasp.position - start) * f,
                ..*grasp
            });
            phases.push(Phase::Approach);
        }
    }
    waypoints.push(*grasp);
    phases.push(Phase::Grasp);

    let axis = joint.axis_direction;
    match joint.kind {
        JointKind::Prismatic => {
            let n = cfg.steps(motion_range / cfg.linear_speed);
            for k in 1..=n {
                let d = motion_range * k as f64 / n as f64;
                waypoints.push(GripperPose {
                    position: grasp.position + axis * d,
                    ..*grasp
                });
                phases.push(Phase::Actuate);
            }
        }
        JointKind::Revolute => {
            let pivot = joint.pivot.expect("validated");
            let unit = Unit::new_normalize(axis);
            let n = cfg.steps(motion_range.to_degrees() / cfg.angular_speed_deg);
            for k in 1..=n {
                let rot = Rotation3::from_axis_angle(&unit, motion_range * k as f64 / n as f64);
                waypoints.push(GripperPose {
                    position: pivot + rot * (grasp.position - pivot),
                    approach_dir: rot * grasp.approach_dir,
                    closing_dir: rot * grasp.closing_dir,
                    aperture: grasp.aperture,
                });
                phases.push(Phase::Actuate);
            }
        }
        JointKind::Fixed => unreachable!(),
    }
    Ok(Trajectory {
        waypoints,
        phases,
        dt: cfg.dt,
    })
}

/// True iff at least 90 % of the range was achieved (inclusive).
pub fn check_success(achieved_motion: f64, motion_range: f64) -> bool {
    achieved_motion >= SUCCESS_FRACTION * motion_range
}

/// Motion achieved by following the trajectory rigidly attached to the part:
/// displacement along the axis (prismatic) or unwrapped angle about it
/// (revolute), measured from the grasp waypoint.
pub fn replay_motion(traj: &Trajectory, joint: &JointParams) -> Result<f64> {
    let grasp = traj
        .phase(Phase::Grasp)
        .next()
        .ok_or_else(|| Error::Policy("trajectory has no grasp waypoint".into()))?;
    let axis = joint.axis_direction.normalize();
    match joint.kind {
        JointKind::Fixed => Ok(0.0),
        JointKind::Prismatic => Ok(traj
            .phase(Phase::Actuate)
            .last()
            .map_or(0.0, |w| (w.position - grasp.position).dot(&axis))),
        JointKind::Revolute => {
            let pivot = joint.pivot.ok_or_else(|| Error::input("revolute joint requires a pivot"))?;
            let radial = |p: &Vector3<f64>| {
                let v = p - pivot;
                v - axis * v.dot(&axis)
            };
            let mut prev = radial(&grasp.position);
            let mut total = 0.0;
            for w in traj.phase(Phase::Actuate) {
                let cur = radial(&w.position);
                total += prev.cross(&cur).dot(&axis).atan2(prev.dot(&cur));
                prev = cur;
            }
            Ok(total)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posefit::joint_from_pose;
    use crate::types::rot_z_deg;

    fn at_identity(size: Vector3<f64>) -> PartPose {
        PartPose::new(Matrix3::identity(), Vector3::zeros(), size).unwrap()
    }

    fn close(a: &Vector3<f64>, b: &Vector3<f64>) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn round_handle_from_above() {
        let g = grasp_pose(&at_identity(Vector3::new(0.04, 0.04, 0.02)), PartClass::RoundFixedHandle);
        assert!(close(&g.approach_dir, &Vector3::new(0.0, 0.0, -1.0)));
        assert!(g.aperture > 0.04);
        g.validate().unwrap();
    }

    #[test]
    fn line_handle_closes_along_y() {
        let g = grasp_pose(&at_identity(Vector3::new(0.12, 0.02, 0.03)), PartClass::LineFixedHandle);
        assert!(close(&g.closing_dir, &Vector3::y()));
        assert!((g.aperture - 0.04).abs() < 1e-15);
    }

    #[test]
    fn button_is_pressed_closed() {
        let g = grasp_pose(&at_identity(Vector3::new(0.02, 0.02, 0.01)), PartClass::SliderButton);
        assert_eq!(g.aperture, 0.0);
        assert!(close(&g.position, &Vector3::new(0.0, 0.0, 0.005)));
    }

    #[test]
    fn every_class_gives_valid_grasp() {
        let pose = PartPose::new(rot_z_deg(35.0), Vector3::new(0.3, 0.1, 0.9), Vector3::new(0.3, 0.2, 0.05)).unwrap();
        for class in PartClass::ALL {
            for intent in [DrawerIntent::Open, DrawerIntent::Fetch] {
                let opts = GraspOptions {
                    drawer_intent: intent,
                    ..GraspOptions::default()
                };
                grasp_pose_with(&pose, class, &opts).validate().unwrap();
            }
        }
    }

    #[test]
    fn door_handle_preferred() {
        let door = at_identity(Vector3::new(0.5, 0.8, 0.02));
        let handle = PartPose::new(Matrix3::identity(), Vector3::new(0.2, 0.0, 0.04), Vector3::new(0.1, 0.02, 0.03)).unwrap();
        let opts = GraspOptions {
            handle: Some((handle, PartClass::LineFixedHandle)),
            ..GraspOptions::default()
        };
        let g = grasp_pose_with(&door, PartClass::HingeDoor, &opts);
        assert!(close(&g.position, &handle.translation));
        let bare = grasp_pose(&door, PartClass::HingeDoor);
        assert!(close(&bare.position, &Vector3::new(0.25, 0.0, 0.0)));
    }

    #[test]
    fn grasp_rotates_with_pose() {
        let pose = at_identity(Vector3::new(0.12, 0.02, 0.03));
        let q = rot_z_deg(90.0);
        let a = grasp_pose(&pose.transformed(&q, &Vector3::zeros()), PartClass::LineFixedHandle);
        let b = grasp_pose(&pose, PartClass::LineFixedHandle).transformed(&q, &Vector3::zeros());
        assert!(close(&a.closing_dir, &b.closing_dir) && close(&a.closing_dir, &-Vector3::x()));
    }

    #[test]
    fn prismatic_endpoint() {
        let grasp = grasp_pose(&at_identity(Vector3::new(0.3, 0.1, 0.2)), PartClass::SliderDrawer);
        let joint = JointParams {
            kind: JointKind::Prismatic,
            axis_direction: Vector3::z(),
            pivot: None,
        };
        let t = actuation_trajectory(&grasp, &joint, 0.1, &TrajectoryConfig::default()).unwrap();
        let last = t.waypoints.last().unwrap();
        assert!(close(&(last.position - grasp.position), &Vector3::new(0.0, 0.0, 0.1)));
        // 0.1 m at 0.1 m/s with dt 1/250
        assert_eq!(t.phase(Phase::Actuate).count(), 250);
        assert_eq!(t.phase(Phase::Approach).count(), 250);
        assert!((replay_motion(&t, &joint).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn quarter_turn_about_z() {
        let grasp = GripperPose {
            position: Vector3::x(),
            approach_dir: -Vector3::z(),
            closing_dir: Vector3::y(),
            aperture: 0.05,
        };
        let joint = JointParams {
            kind: JointKind::Revolute,
            axis_direction: Vector3::z(),
            pivot: Some(Vector3::zeros()),
        };
        let t = actuation_trajectory(&grasp, &joint, std::f64::consts::FRAC_PI_2, &TrajectoryConfig::default()).unwrap();
        let last = t.waypoints.last().unwrap();
        assert!(close(&last.position, &Vector3::y()));
        assert!(close(&last.closing_dir, &-Vector3::x()));
        for w in t.phase(Phase::Actuate) {
            assert!((w.position.xy().norm() - 1.0).abs() < 1e-12);
        }
        assert!((replay_motion(&t, &joint).unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn fixed_joint_refused() {
        let pose = at_identity(Vector3::new(0.1, 0.02, 0.02));
        let joint = joint_from_pose(&pose, PartClass::LineFixedHandle);
        let g = grasp_pose(&pose, PartClass::LineFixedHandle);
        assert!(matches!(
            actuation_trajectory(&g, &joint, 0.1, &TrajectoryConfig::default()),
            Err(Error::Policy(_))
        ));
    }

    #[test]
    fn success_boundary() {
        let range = 0.37;
        assert!(check_success(range, range));
        assert!(check_success(0.9 * range, range));
        assert!(!check_success(0.89 * range, range));
    }
}
