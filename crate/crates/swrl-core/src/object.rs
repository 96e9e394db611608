//! Single-joint articulated objects: doors, valves, drawers.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{rotation_about, Transform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointType {
    Prismatic,
    Revolute,
}

/// Task families used for reward bands and default decompositions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectClass {
    HandwheelValve,
    LeverValve,
    Door,
    Drawer,
    /// Planar knob valve for the reduced desk-scale world: the gripper is
    /// free to yaw about the grasp point.
    PlanarValve,
}

impl ObjectClass {
    pub fn joint_type(&self) -> JointType {
        match self {
            ObjectClass::Drawer => JointType::Prismatic,
            _ => JointType::Revolute,
        }
    }

    /// Desired object-velocity band (rad/s for revolute, m/s for prismatic).
    pub fn velocity_band(&self) -> (f64, f64) {
        match self {
            ObjectClass::HandwheelValve | ObjectClass::LeverValve | ObjectClass::PlanarValve => {
                (0.7, 0.8)
            }
            ObjectClass::Door => (0.1, 0.15),
            ObjectClass::Drawer => (0.4, 0.5),
        }
    }

    /// Whether the grasp rigidly locks the gripper yaw to the handle.
    pub fn grasp_locks_yaw(&self) -> bool {
        !matches!(self, ObjectClass::PlanarValve)
    }
}

/// One-joint articulated object with friction, damping, and spring terms.
///
/// `joint_origin` places the joint in the world; `joint_axis` (unit, in the
/// joint-origin frame) is the motion axis. `handle_offset` is the handle
/// position in the object frame at joint value zero; for revolute objects its
/// x-y projection defines the handle radius.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectModel {
    pub class: ObjectClass,
    pub joint_type: JointType,
    pub joint_origin: Transform,
    pub joint_axis: Vector3<f64>,
    pub handle_offset: Vector3<f64>,
    pub joint_range: (f64, f64),
    pub dry_friction: f64,
    pub viscous_damping: f64,
    pub spring_k: f64,
    pub spring_rest: f64,
    pub object_inertia: f64,
    /// Commanded articulation sense: +1 opens along +z / counter-clockwise
    /// about +z, -1 the opposite way.
    pub open_sense: f64,
}

impl ObjectModel {
    /// Build an object from world-frame geometry: joint position and axis,
    /// plus the handle position at joint value zero.
    #[allow(clippy::too_many_arguments)]
    pub fn from_world_geometry(
        class: ObjectClass,
        joint_position: Vector3<f64>,
        joint_axis_world: Vector3<f64>,
        handle_world: Vector3<f64>,
        joint_range: (f64, f64),
        dry_friction: f64,
        viscous_damping: f64,
        object_inertia: f64,
    ) -> Result<Self> {
        let z = joint_axis_world;
        if (z.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::config("object.joint_axis", "axis must be unit length"));
        }
        let offset = handle_world - joint_position;
        let radial = offset - z * offset.dot(&z);
        let joint_type = class.joint_type();
        let x = if radial.norm() > 1e-9 {
            radial.normalize()
        } else if joint_type == JointType::Revolute {
            return Err(Error::DegenerateGeometry(
                "revolute object with handle on the joint axis".into(),
            ));
        } else {
            // Prismatic handle may sit on the axis; any perpendicular works.
            perpendicular_to(&z)
        };
        let y = z.cross(&x);
        let rotation = Matrix3::from_columns(&[x, y, z]);
        let joint_origin = Transform::new(rotation, joint_position);
        let handle_offset = rotation.transpose() * offset;
        let model = ObjectModel {
            class,
            joint_type,
            joint_origin,
            joint_axis: Vector3::z(),
            handle_offset,
            joint_range,
            dry_friction,
            viscous_damping,
            spring_k: 0.0,
            spring_rest: 0.0,
            object_inertia,
            open_sense: 1.0,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if (self.joint_axis.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::config("object.joint_axis", "axis must be unit length"));
        }
        if self.joint_type == JointType::Revolute && self.handle_radius() < 1e-3 {
            return Err(Error::DegenerateGeometry(format!(
                "revolute handle radius {:.4} m below 1 mm",
                self.handle_radius()
            )));
        }
        if self.dry_friction < 0.0
            || self.viscous_damping < 0.0
            || self.spring_k < 0.0
            || self.object_inertia <= 0.0
        {
            return Err(Error::config(
                "object.dynamics",
                "friction, damping and spring must be non-negative; inertia positive",
            ));
        }
        if self.joint_range.0 >= self.joint_range.1 {
            return Err(Error::config("object.joint_range", "min must be below max"));
        }
        if self.open_sense != 1.0 && self.open_sense != -1.0 {
            return Err(Error::config("object.open_sense", "must be +1 or -1"));
        }
        Ok(())
    }

    /// Handle radius: projection of the handle offset onto the frame x-y plane.
    pub fn handle_radius(&self) -> f64 {
        (self.handle_offset.x * self.handle_offset.x + self.handle_offset.y * self.handle_offset.y)
            .sqrt()
    }

    /// Handle position in the object frame at joint value `theta`.
    pub fn handle_in_frame(&self, theta: f64) -> Vector3<f64> {
        match self.joint_type {
            JointType::Revolute => rotation_about(&Vector3::z(), theta) * self.handle_offset,
            JointType::Prismatic => self.handle_offset + Vector3::new(0.0, 0.0, theta),
        }
    }

    /// Handle velocity in the object frame at joint value `theta`, rate `theta_dot`.
    pub fn handle_velocity_in_frame(&self, theta: f64, theta_dot: f64) -> Vector3<f64> {
        match self.joint_type {
            JointType::Revolute => {
                let p = self.handle_in_frame(theta);
                Vector3::new(-p.y, p.x, 0.0) * theta_dot
            }
            JointType::Prismatic => Vector3::new(0.0, 0.0, theta_dot),
        }
    }
}

fn perpendicular_to(z: &Vector3<f64>) -> Vector3<f64> {
    let candidate = if z.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    (candidate - z * candidate.dot(z)).normalize()
}

/// Static collision primitive for the proxy contact model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "primitive", rename_all = "snake_case")]
pub enum Obstacle {
    /// Points with `normal · p < offset` are inside.
    Halfspace { normal: Vector3<f64>, offset: f64 },
    Box {
        pose: Transform,
        half_extents: Vector3<f64>,
    },
    Capsule {
        start: Vector3<f64>,
        end: Vector3<f64>,
        radius: f64,
    },
}

impl Obstacle {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Obstacle::Halfspace { normal, .. } => (normal.norm() - 1.0).abs() < 1e-6,
            Obstacle::Box { half_extents, .. } => half_extents.iter().all(|v| *v > 0.0),
            Obstacle::Capsule { radius, .. } => *radius > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config("obstacle", "dimensions must be positive"))
        }
    }

    /// Signed distance from a point (negative inside).
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        match self {
            Obstacle::Halfspace { normal, offset } => normal.dot(p) - offset,
            Obstacle::Box { pose, half_extents } => {
                let local = pose.inverse().transform_point(p);
                let d = Vector3::new(
                    local.x.abs() - half_extents.x,
                    local.y.abs() - half_extents.y,
                    local.z.abs() - half_extents.z,
                );
                let outside = Vector3::new(d.x.max(0.0), d.y.max(0.0), d.z.max(0.0));
                outside.norm() + d.x.max(d.y.max(d.z)).min(0.0)
            }
            Obstacle::Capsule { start, end, radius } => {
                let seg = end - start;
                let len2 = seg.dot(&seg);
                let t = if len2 > 0.0 {
                    ((p - start).dot(&seg) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                (p - (start + seg * t)).norm() - radius
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn world_geometry_constructor_aligns_frame() {
        // Door: hinge axis +z at the origin, handle at (0.8, 0, 1.0).
        let door = ObjectModel::from_world_geometry(
            ObjectClass::Door,
            Vector3::zeros(),
            Vector3::z(),
            Vector3::new(0.8, 0.0, 1.0),
            (0.0, 2.0),
            0.5,
            0.2,
            1.0,
        )
        .unwrap();
        let x_axis = door.joint_origin.rotation.column(0).into_owned();
        assert!((x_axis - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        assert!((door.handle_offset - Vector3::new(0.8, 0.0, 1.0)).norm() < 1e-12);
        assert!((door.handle_radius() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn degenerate_revolute_handle_rejected() {
        let res = ObjectModel::from_world_geometry(
            ObjectClass::Door,
            Vector3::zeros(),
            Vector3::z(),
            Vector3::new(0.0, 0.0, 1.0),
            (0.0, 2.0),
            0.5,
            0.2,
            1.0,
        );
        assert!(matches!(res, Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn handle_kinematics_consistent() {
        let valve = ObjectModel::from_world_geometry(
            ObjectClass::HandwheelValve,
            Vector3::new(0.5, 0.0, 0.3),
            Vector3::z(),
            Vector3::new(0.65, 0.0, 0.3),
            (-10.0, 10.0),
            0.3,
            0.1,
            0.05,
        )
        .unwrap();
        let theta = 0.9;
        let h = 1e-7;
        let fd = (valve.handle_in_frame(theta + h) - valve.handle_in_frame(theta - h)) / (2.0 * h);
        let v = valve.handle_velocity_in_frame(theta, 1.0);
        assert!((fd - v).norm() < 1e-6);
    }

    #[test]
    fn box_signed_distance() {
        let b = Obstacle::Box {
            pose: Transform::identity(),
            half_extents: Vector3::new(1.0, 1.0, 1.0),
        };
        assert!((b.signed_distance(&Vector3::new(2.0, 0.0, 0.0)) - 1.0).abs() < 1e-12);
        assert!((b.signed_distance(&Vector3::new(0.5, 0.0, 0.0)) + 0.5).abs() < 1e-12);
    }
}
