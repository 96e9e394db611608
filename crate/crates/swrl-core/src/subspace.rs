//! Object frame construction and task-space decomposition.
//!
//! The 6-D task space `[x, y, z, roll, pitch, yaw]`, expressed in the object
//! frame, is partitioned into three disjoint subspaces:
//!
//! - kinematic: the components that actuate the object joint, force-controlled;
//! - geometric: components pinned by maintaining the grasp, motion-controlled
//!   from planned references;
//! - redundant: everything else, motion-controlled by the learned policy.
//!
//! The selection matrix `S` is diagonal 0/1 with ones on the geometric and
//! redundant rows.

use nalgebra::{Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Transform;
use crate::object::{JointType, ObjectClass, ObjectModel};

/// Task-space coordinate indices in the fixed `[x,y,z,roll,pitch,yaw]` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskAxis {
    X,
    Y,
    Z,
    Roll,
    Pitch,
    Yaw,
}

impl TaskAxis {
    pub const ALL: [TaskAxis; 6] = [
        TaskAxis::X,
        TaskAxis::Y,
        TaskAxis::Z,
        TaskAxis::Roll,
        TaskAxis::Pitch,
        TaskAxis::Yaw,
    ];

    pub fn index(&self) -> usize {
        match self {
            TaskAxis::X => 0,
            TaskAxis::Y => 1,
            TaskAxis::Z => 2,
            TaskAxis::Roll => 3,
            TaskAxis::Pitch => 4,
            TaskAxis::Yaw => 5,
        }
    }
}

/// Virtual frame at the object joint: z along the motion axis, x toward the
/// handle.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ObjectFrame {
    pub pose: Transform,
}

impl ObjectFrame {
    pub fn x_axis(&self) -> Vector3<f64> {
        self.pose.rotation.column(0).into_owned()
    }

    pub fn y_axis(&self) -> Vector3<f64> {
        self.pose.rotation.column(1).into_owned()
    }

    pub fn z_axis(&self) -> Vector3<f64> {
        self.pose.rotation.column(2).into_owned()
    }

    /// World point expressed in this frame.
    pub fn to_frame(&self, world: &Vector3<f64>) -> Vector3<f64> {
        self.pose.inverse().transform_point(world)
    }

    pub fn to_world(&self, local: &Vector3<f64>) -> Vector3<f64> {
        self.pose.transform_point(local)
    }
}

/// Build the object frame from the model's joint geometry.
///
/// z is the joint axis; x points from the joint toward the handle, projected
/// perpendicular to z; y completes the right-handed triad.
pub fn build_object_frame(object: &ObjectModel) -> Result<ObjectFrame> {
    object.validate()?;
    let z = object
        .joint_origin
        .transform_vector(&object.joint_axis)
        .normalize();
    // The stored frame already satisfies the convention (the handle offset is
    // expressed in it), so reconstruct x from the handle direction to keep the
    // convention explicit rather than trusting stored columns.
    let handle_world = object
        .joint_origin
        .transform_point(&object.handle_in_frame(0.0));
    let offset = handle_world - object.joint_origin.translation;
    let radial = offset - z * offset.dot(&z);
    let x = if radial.norm() > 1e-9 {
        radial.normalize()
    } else if object.joint_type == JointType::Revolute {
        return Err(Error::DegenerateGeometry(
            "revolute handle on the joint axis; frame x undefined".into(),
        ));
    } else {
        object.joint_origin.rotation.column(0).into_owned()
    };
    let y = z.cross(&x);
    let rotation = nalgebra::Matrix3::from_columns(&[x, y, z]);
    Ok(ObjectFrame {
        pose: Transform::new(rotation, object.joint_origin.translation),
    })
}

/// Disjoint partition of the task space plus the derived selection matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubspaceDecomposition {
    pub kinematic: Vec<TaskAxis>,
    pub geometric: Vec<TaskAxis>,
    pub redundant: Vec<TaskAxis>,
}

impl SubspaceDecomposition {
    pub fn new(
        kinematic: Vec<TaskAxis>,
        geometric: Vec<TaskAxis>,
        redundant: Vec<TaskAxis>,
    ) -> Result<Self> {
        let d = SubspaceDecomposition {
            kinematic,
            geometric,
            redundant,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = [false; 6];
        for axis in self
            .kinematic
            .iter()
            .chain(self.geometric.iter())
            .chain(self.redundant.iter())
        {
            let i = axis.index();
            if seen[i] {
                return Err(Error::config(
                    "decomposition",
                    format!("axis {axis:?} assigned to more than one subspace"),
                ));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::config(
                "decomposition",
                "subspaces must cover the full 6-D task space",
            ));
        }
        Ok(())
    }

    /// Diagonal 0/1 selection matrix with ones on motion-controlled rows
    /// (geometric and redundant subspaces).
    pub fn selection_matrix(&self) -> Matrix6<f64> {
        let mut s = Matrix6::zeros();
        for axis in self.geometric.iter().chain(self.redundant.iter()) {
            s[(axis.index(), axis.index())] = 1.0;
        }
        s
    }

    /// Diagonal of the selection matrix as a 6-vector.
    pub fn selection_diag(&self) -> Vector6<f64> {
        let s = self.selection_matrix();
        Vector6::from_iterator((0..6).map(|i| s[(i, i)]))
    }

    pub fn redundant_dim(&self) -> usize {
        self.redundant.len()
    }
}

/// Default decomposition per object class.
///
/// Revolute objects actuate through `{x, y}`, prismatic through `{z}`. The
/// geometric sets are the components pinned by holding the grasp: `{z, yaw}`
/// for handle-locked revolute objects, `{x, y, yaw}` for the drawer. The
/// planar knob leaves yaw free, so only the structurally empty rows of the
/// planar arm stay geometric.
pub fn decompose(
    class: ObjectClass,
    overrides: Option<&SubspaceDecomposition>,
) -> Result<SubspaceDecomposition> {
    if let Some(d) = overrides {
        d.validate()?;
        return Ok(d.clone());
    }
    use TaskAxis::*;
    let d = match class {
        ObjectClass::HandwheelValve | ObjectClass::LeverValve | ObjectClass::Door => {
            SubspaceDecomposition {
                kinematic: vec![X, Y],
                geometric: vec![Z, Yaw],
                redundant: vec![Roll, Pitch],
            }
        }
        ObjectClass::Drawer => SubspaceDecomposition {
            kinematic: vec![Z],
            geometric: vec![X, Y, Yaw],
            redundant: vec![Roll, Pitch],
        },
        ObjectClass::PlanarValve => SubspaceDecomposition {
            kinematic: vec![X, Y],
            geometric: vec![Z, Roll, Pitch],
            redundant: vec![Yaw],
        },
    };
    d.validate()?;
    Ok(d)
}

/// Unit force direction in the object frame: force rows only, moment rows zero.
///
/// Prismatic: along the frame z-axis, signed by the commanded opening sense.
/// Revolute: the tangent of the handle circle, `(ω̂ × r)/‖ω̂ × r‖` with the
/// commanded rotation sense about z.
pub fn force_direction(object: &ObjectModel, theta: f64) -> Result<Vector6<f64>> {
    let mut dir = Vector6::zeros();
    match object.joint_type {
        JointType::Prismatic => {
            dir[2] = object.open_sense;
        }
        JointType::Revolute => {
            let r = object.handle_in_frame(theta);
            let r_xy = Vector3::new(r.x, r.y, 0.0);
            if r_xy.norm() < 1e-9 {
                return Err(Error::DegenerateGeometry(
                    "handle radius vanished; tangent undefined".into(),
                ));
            }
            let omega = Vector3::new(0.0, 0.0, object.open_sense);
            let tangent = omega.cross(&r_xy).normalize();
            dir[0] = tangent.x;
            dir[1] = tangent.y;
        }
    }
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::object::ObjectClass;
    use nalgebra::Matrix3;

    fn test_valve() -> ObjectModel {
        ObjectModel::from_world_geometry(
            ObjectClass::HandwheelValve,
            Vector3::new(0.4, 0.1, 0.5),
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::new(0.55, 0.1, 0.5),
            (-20.0, 20.0),
            0.4,
            0.2,
            0.05,
        )
        .unwrap()
    }

    #[test]
    fn door_frame_axis_aligned() {
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
        let frame = build_object_frame(&door).unwrap();
        assert!((frame.x_axis() - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        assert!((frame.z_axis() - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn drawer_frame_z_is_pull_direction() {
        let pull = Vector3::new(1.0, 0.0, 0.0);
        let drawer = ObjectModel::from_world_geometry(
            ObjectClass::Drawer,
            Vector3::new(0.6, 0.0, 0.4),
            pull,
            Vector3::new(0.62, 0.0, 0.45),
            (0.0, 0.5),
            5.0,
            2.0,
            3.0,
        )
        .unwrap();
        let frame = build_object_frame(&drawer).unwrap();
        assert!((frame.z_axis() - pull).norm() < 1e-12);
    }

    #[test]
    fn arbitrary_valve_frame_orthonormal() {
        let axis = Vector3::new(0.3, -0.5, 0.8).normalize();
        let valve = ObjectModel::from_world_geometry(
            ObjectClass::HandwheelValve,
            Vector3::new(0.2, 0.3, 0.9),
            axis,
            Vector3::new(0.5, 0.35, 0.95),
            (-20.0, 20.0),
            0.4,
            0.2,
            0.05,
        )
        .unwrap();
        let frame = build_object_frame(&valve).unwrap();
        let r = frame.pose.rotation;
        let defect = (r.transpose() * r - Matrix3::identity())
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(defect < 1e-9);
        assert!((r.determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn handwheel_decomposition_matches_convention() {
        let d = decompose(ObjectClass::HandwheelValve, None).unwrap();
        assert_eq!(d.kinematic, vec![TaskAxis::X, TaskAxis::Y]);
        assert_eq!(d.geometric, vec![TaskAxis::Z, TaskAxis::Yaw]);
        assert_eq!(d.redundant, vec![TaskAxis::Roll, TaskAxis::Pitch]);
        let s = d.selection_matrix();
        let expected = [0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        for i in 0..6 {
            assert_eq!(s[(i, i)], expected[i]);
        }
    }

    #[test]
    fn drawer_selection_zero_only_on_z() {
        let d = decompose(ObjectClass::Drawer, None).unwrap();
        assert_eq!(d.kinematic, vec![TaskAxis::Z]);
        let s = d.selection_matrix();
        for i in 0..6 {
            assert_eq!(s[(i, i)], if i == 2 { 0.0 } else { 1.0 });
        }
    }

    #[test]
    fn selection_projectors_complementary() {
        for class in [
            ObjectClass::HandwheelValve,
            ObjectClass::LeverValve,
            ObjectClass::Door,
            ObjectClass::Drawer,
            ObjectClass::PlanarValve,
        ] {
            let d = decompose(class, None).unwrap();
            let s = d.selection_matrix();
            let i_minus_s = Matrix6::identity() - s;
            assert_eq!(s * i_minus_s, Matrix6::zeros());
            assert_eq!(s * s, s);
            assert_eq!(i_minus_s * i_minus_s, i_minus_s);
        }
    }

    #[test]
    fn overlapping_override_rejected() {
        let d = SubspaceDecomposition {
            kinematic: vec![TaskAxis::X, TaskAxis::Y],
            geometric: vec![TaskAxis::Y, TaskAxis::Z, TaskAxis::Yaw],
            redundant: vec![TaskAxis::Roll, TaskAxis::Pitch],
        };
        assert!(decompose(ObjectClass::Door, Some(&d)).is_err());
    }

    #[test]
    fn prismatic_force_direction() {
        let drawer = ObjectModel::from_world_geometry(
            ObjectClass::Drawer,
            Vector3::zeros(),
            Vector3::x(),
            Vector3::new(0.02, 0.0, 0.05),
            (0.0, 0.5),
            5.0,
            2.0,
            3.0,
        )
        .unwrap();
        let dir = force_direction(&drawer, 0.1).unwrap();
        assert_eq!(
            dir.as_slice(),
            &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
            "opening along +z in the object frame"
        );
    }

    #[test]
    fn revolute_tangent_direction() {
        let valve = test_valve();
        // At theta = 0 the handle sits on +x; omega = +z gives tangent +y.
        let dir = force_direction(&valve, 0.0).unwrap();
        assert!((dir[0] - 0.0).abs() < 1e-12);
        assert!((dir[1] - 1.0).abs() < 1e-12);
        assert_eq!(&dir.as_slice()[2..], &[0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn tangent_orthogonal_to_radius_and_axis() {
        let valve = test_valve();
        for i in 0..40 {
            let theta = i as f64 * 0.2 - 4.0;
            let dir = force_direction(&valve, theta).unwrap();
            let f = Vector3::new(dir[0], dir[1], dir[2]);
            let r = valve.handle_in_frame(theta);
            assert!(f.dot(&Vector3::new(r.x, r.y, 0.0)).abs() < 1e-12);
            assert!(f.dot(&Vector3::z()).abs() < 1e-12);
            assert!((f.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tangent_continuity_along_quarter_turn() {
        let valve = test_valve();
        let steps = 200;
        let d_theta = std::f64::consts::FRAC_PI_2 / steps as f64;
        let mut prev = force_direction(&valve, 0.0).unwrap();
        for i in 1..=steps {
            let cur = force_direction(&valve, i as f64 * d_theta).unwrap();
            let dot: f64 = prev.dot(&cur).clamp(-1.0, 1.0);
            assert!(dot.acos() < d_theta + 1e-6, "direction jump at step {i}");
            prev = cur;
        }
    }

    #[test]
    fn decomposition_is_stable_across_invocations() {
        let a = decompose(ObjectClass::Door, None).unwrap();
        let b = decompose(ObjectClass::Door, None).unwrap();
        assert_eq!(a, b);
    }
}
