//! Hybrid force/motion control at the 1 kHz rate.
//!
//! The torque law routes motion control (inertia-weighted PD) to the
//! selected rows and force feedforward to the complementary rows:
//!
//! ```text
//! τ = Jᵀ( Λ S (Kp Xe + Kd Ve) + (I − S) F_d ) + g(q)
//! ```
//!
//! Policy outputs arrive at 100 Hz and are integrated into the desired
//! command, which is then linearly interpolated across the ten controller
//! ticks of each policy period.

use nalgebra::{DVector, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{diag_mul, JacobianBundle, RobotModel};
use crate::math::{angle_axis_of, lerp, lerp6, rotation_from_rpy, Transform};
use crate::object::{JointType, ObjectModel};
use crate::subspace::SubspaceDecomposition;

pub const DT_POLICY: f64 = 1e-2;
/// Controller ticks per policy tick (1 kHz / 100 Hz).
pub const TICKS_PER_POLICY: usize = 10;

/// Desired force magnitude and direction on the kinematic rows plus desired
/// motion on the selected rows, all in the object frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridCommand {
    /// Desired force magnitude, N, non-negative.
    pub force_magnitude: f64,
    /// Unit force direction; components vanish on motion-controlled rows.
    pub force_dir: Vector6<f64>,
    /// Desired pose coordinates `[x,y,z,roll,pitch,yaw]`.
    pub x_des: Vector6<f64>,
    /// Desired task velocity.
    pub xd_des: Vector6<f64>,
    pub timestamp: f64,
}

impl HybridCommand {
    pub fn hold(pose: Vector6<f64>, timestamp: f64) -> Self {
        HybridCommand {
            force_magnitude: 0.0,
            force_dir: Vector6::zeros(),
            x_des: pose,
            xd_des: Vector6::zeros(),
            timestamp,
        }
    }

    /// Desired force vector `F_d = F · dir`.
    pub fn desired_force(&self) -> Vector6<f64> {
        self.force_dir * self.force_magnitude
    }
}

/// Diagonal proportional and derivative gains.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GainSet {
    pub kp: Vector6<f64>,
    pub kd: Vector6<f64>,
}

impl GainSet {
    /// Position gains on linear rows, orientation gains on angular rows,
    /// critically damped.
    pub fn critically_damped(kp_linear: f64, kp_angular: f64) -> Self {
        let kp = Vector6::new(
            kp_linear, kp_linear, kp_linear, kp_angular, kp_angular, kp_angular,
        );
        let kd = kp.map(|v: f64| 2.0 * v.sqrt());
        GainSet { kp, kd }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kp.iter().chain(self.kd.iter()).any(|v| *v <= 0.0) {
            return Err(Error::config("gains", "diagonal entries must be positive"));
        }
        Ok(())
    }
}

/// Hybrid force/motion torque law with gravity compensation and clamping.
#[allow(clippy::too_many_arguments)]
pub fn compute_torque(
    model: &RobotModel,
    bundle: &JacobianBundle,
    selection_diag: &Vector6<f64>,
    gains: &GainSet,
    x_err: &Vector6<f64>,
    v_err: &Vector6<f64>,
    f_des: &Vector6<f64>,
    gravity_comp: &DVector<f64>,
) -> Result<DVector<f64>> {
    let finite = x_err
        .iter()
        .chain(v_err.iter())
        .chain(f_des.iter())
        .chain(gravity_comp.iter())
        .all(|v| v.is_finite());
    if !finite {
        return Err(Error::NonFinite("controller inputs"));
    }
    let pd = diag_mul(&gains.kp, x_err) + diag_mul(&gains.kd, v_err);
    let motion = bundle.lambda * diag_mul(selection_diag, &pd);
    let complement = Vector6::from_iterator((0..6).map(|i| 1.0 - selection_diag[i]));
    let force = diag_mul(&complement, f_des);
    let task = motion + force;
    let mut tau = bundle.j.transpose() * task + gravity_comp;
    if tau.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("torque output"));
    }
    model.clamp_torques(&mut tau);
    Ok(tau)
}

/// Pose coordinates `[translation; roll,pitch,yaw]` of a transform.
pub fn pose_coordinates(t: &Transform) -> Vector6<f64> {
    let r = &t.rotation;
    let pitch = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
    let yaw = r[(1, 0)].atan2(r[(0, 0)]);
    let roll = r[(2, 1)].atan2(r[(2, 2)]);
    Vector6::new(
        t.translation.x,
        t.translation.y,
        t.translation.z,
        roll,
        pitch,
        yaw,
    )
}

/// Task-space pose error: linear difference plus the angle-axis vector of
/// the relative rotation (the desired orientation is rebuilt from the
/// roll-pitch-yaw rows of `x_des`).
pub fn pose_error(x_des: &Vector6<f64>, current: &Transform) -> Vector6<f64> {
    let r_des = rotation_from_rpy(x_des[3], x_des[4], x_des[5]);
    let e_rot = angle_axis_of(&(r_des * current.rotation.transpose()));
    Vector6::new(
        x_des[0] - current.translation.x,
        x_des[1] - current.translation.y,
        x_des[2] - current.translation.z,
        e_rot.x,
        e_rot.y,
        e_rot.z,
    )
}

/// Grasp-time anchors for the geometric references.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraspAnchors {
    /// End-effector pose coordinates in the object frame at grasp.
    pub pose0: Vector6<f64>,
    /// Object joint value at grasp.
    pub theta0: f64,
}

/// Planned references on the geometric rows as deterministic functions of
/// the object's joint value.
///
/// Handle-locked revolute objects advance the gripper yaw with the joint;
/// every other geometric coordinate holds its grasp value.
pub fn geometric_reference(
    object: &ObjectModel,
    anchors: &GraspAnchors,
    theta: f64,
    theta_dot_est: f64,
) -> (Vector6<f64>, Vector6<f64>) {
    let mut x_g = anchors.pose0;
    let mut xd_g = Vector6::zeros();
    if object.joint_type == JointType::Revolute && object.class.grasp_locks_yaw() {
        x_g[5] = anchors.pose0[5] + (theta - anchors.theta0);
        xd_g[5] = theta_dot_est;
    }
    (x_g, xd_g)
}

/// Fold one pair of policy actions into the previous command.
///
/// The force magnitude moves by `delta_f` and clamps to `[0, f_max]`; the
/// redundant coordinates integrate the commanded acceleration; the geometric
/// coordinates copy the planner references.
pub fn integrate_policy_outputs(
    prev: &HybridCommand,
    delta_f: f64,
    accel_r: &[f64],
    planner_refs: (&Vector6<f64>, &Vector6<f64>),
    decomposition: &SubspaceDecomposition,
    f_max: f64,
) -> Result<HybridCommand> {
    if accel_r.len() != decomposition.redundant_dim() {
        return Err(Error::DimensionMismatch {
            what: "redundant acceleration",
            expected: decomposition.redundant_dim(),
            got: accel_r.len(),
        });
    }
    let mut next = prev.clone();
    next.force_magnitude = (prev.force_magnitude + delta_f).clamp(0.0, f_max);
    for (j, axis) in decomposition.redundant.iter().enumerate() {
        let i = axis.index();
        next.xd_des[i] = prev.xd_des[i] + accel_r[j] * DT_POLICY;
        next.x_des[i] = prev.x_des[i] + next.xd_des[i] * DT_POLICY;
    }
    let (x_g, xd_g) = planner_refs;
    for axis in &decomposition.geometric {
        let i = axis.index();
        next.x_des[i] = x_g[i];
        next.xd_des[i] = xd_g[i];
    }
    next.timestamp = prev.timestamp + DT_POLICY;
    Ok(next)
}

/// Linear interpolation between consecutive policy-tick commands, exact at
/// both endpoints.
pub fn interpolate_command(prev: &HybridCommand, next: &HybridCommand, t: f64) -> HybridCommand {
    HybridCommand {
        force_magnitude: lerp(prev.force_magnitude, next.force_magnitude, t),
        force_dir: next.force_dir,
        x_des: lerp6(&prev.x_des, &next.x_des, t),
        xd_des: lerp6(&prev.xd_des, &next.xd_des, t),
        timestamp: lerp(prev.timestamp, next.timestamp, t),
    }
}

/// Controller configuration constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControllerParams {
    pub gains: GainSet,
    /// Safety clamp on the commanded force magnitude (N).
    pub f_max: f64,
    /// Damping scale of the task-space pseudoinverse.
    pub lambda_damp: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        ControllerParams {
            gains: GainSet::critically_damped(400.0, 100.0),
            f_max: 60.0,
            lambda_damp: 1e-2,
        }
    }
}

impl ControllerParams {
    pub fn validate(&self) -> Result<()> {
        self.gains.validate()?;
        if self.f_max <= 0.0 {
            return Err(Error::config("controller.f_max", "must be positive"));
        }
        if self.lambda_damp < 0.0 {
            return Err(Error::config("controller.lambda_damp", "must be non-negative"));
        }
        Ok(())
    }
}

/// End-effector twist in the object frame.
pub fn ee_twist_in_frame(
    bundle: &JacobianBundle,
    qd: &DVector<f64>,
) -> Vector6<f64> {
    let twist = &bundle.j * qd;
    Vector6::from_iterator((0..6).map(|i| twist[i]))
}

/// End-effector pose in the object frame.
pub fn ee_pose_in_frame(frame_pose: &Transform, ee_world: &Transform) -> Transform {
    frame_pose.inverse().compose(ee_world)
}

pub fn vector3_rows(v: &Vector6<f64>, first: usize) -> Vector3<f64> {
    Vector3::new(v[first], v[first + 1], v[first + 2])
}
