//! Fixed-step physics of the coupled arm + articulated object system.
//!
//! Semi-implicit Euler at 1 kHz. The arm integrates full rigid-body dynamics
//! (CRBA inertia, RNE bias torques); the object is a single joint with dry
//! friction (stiction), viscous damping, and an optional spring. Grasping is
//! a stiff spring-damper coupling between the end-effector grasp point and
//! the handle, with an optional yaw lock; it breaks on excess force or
//! separation. Collisions are a penalty proxy between arm-link capsules and
//! static primitives.

use nalgebra::{DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{
    bias_torques, forward_kinematics, point_jacobian_world, ForwardKinematics, RobotModel,
};
use crate::math::{wrap_angle, yaw_of};
use crate::object::{JointType, ObjectClass, ObjectModel, Obstacle};
use crate::subspace::ObjectFrame;

pub const DT_SIM: f64 = 1e-3;

/// Contact produced by the proxy collision model. `force` is the penalty
/// contact force `c_F = -k_contact * depth`, negative by the compression
/// convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub location: Vector3<f64>,
    pub force: f64,
}

/// Physics constants of the coupled world.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimParams {
    pub gravity: Vector3<f64>,
    /// Grasp coupling translational stiffness (N/m) and damping (N·s/m).
    pub grasp_stiffness: f64,
    pub grasp_damping: f64,
    /// Yaw-lock stiffness (N·m/rad) and damping (N·m·s/rad).
    pub grasp_yaw_stiffness: f64,
    pub grasp_yaw_damping: f64,
    /// Coupling force above which the grasp breaks (N).
    pub grasp_break_force: f64,
    /// Separation above which the grasp breaks (m).
    pub grasp_break_distance: f64,
    /// Contact penalty stiffness (N/m).
    pub contact_stiffness: f64,
    /// Object stiction velocity dead-band (rad/s or m/s).
    pub stiction_deadband: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            gravity: Vector3::new(0.0, 0.0, -9.81),
            grasp_stiffness: 30_000.0,
            grasp_damping: 200.0,
            grasp_yaw_stiffness: 200.0,
            grasp_yaw_damping: 2.0,
            grasp_break_force: 80.0,
            grasp_break_distance: 5e-3,
            contact_stiffness: 2_000.0,
            stiction_deadband: 1e-4,
        }
    }
}

/// Mutable state of the coupled system.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
    pub theta: f64,
    pub theta_dot: f64,
    pub grasp_attached: bool,
    /// Yaw of the gripper relative to the object joint at attach time.
    pub grasp_yaw_offset: f64,
    tick: u64,
    pub last_contacts: Vec<Contact>,
}

impl WorldState {
    pub fn new(q: DVector<f64>, theta: f64) -> Self {
        let k = q.len();
        WorldState {
            q,
            qd: DVector::zeros(k),
            theta,
            theta_dot: 0.0,
            grasp_attached: false,
            grasp_yaw_offset: 0.0,
            tick: 0,
            last_contacts: Vec::new(),
        }
    }

    /// Simulation time, an exact multiple of the step size.
    pub fn sim_time(&self) -> f64 {
        self.tick as f64 * DT_SIM
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }
}

/// Immutable world description: models, frame, obstacles, constants.
#[derive(Debug, Clone)]
pub struct World {
    pub robot: RobotModel,
    pub object: ObjectModel,
    pub frame: ObjectFrame,
    pub obstacles: Vec<Obstacle>,
    pub params: SimParams,
}

impl World {
    pub fn new(
        robot: RobotModel,
        object: ObjectModel,
        frame: ObjectFrame,
        obstacles: Vec<Obstacle>,
        params: SimParams,
    ) -> Self {
        World {
            robot,
            object,
            frame,
            obstacles,
            params,
        }
    }

    /// Handle position in the world at object joint value `theta`.
    pub fn handle_world(&self, theta: f64) -> Vector3<f64> {
        self.frame.to_world(&self.object.handle_in_frame(theta))
    }

    pub fn handle_velocity_world(&self, theta: f64, theta_dot: f64) -> Vector3<f64> {
        self.frame
            .pose
            .transform_vector(&self.object.handle_velocity_in_frame(theta, theta_dot))
    }

    /// Attach the grasp, recording the yaw offset between gripper and joint.
    pub fn attach_grasp(&self, state: &mut WorldState, fk: &ForwardKinematics) {
        let r_in_frame = self.frame.pose.rotation.transpose() * fk.ee.rotation;
        state.grasp_yaw_offset = wrap_angle(yaw_of(&r_in_frame) - state.theta);
        state.grasp_attached = true;
    }

    /// Advance one fixed step under commanded joint torques.
    pub fn step(&self, state: &mut WorldState, joint_torques: &DVector<f64>) -> Result<()> {
        self.robot.check_dim(joint_torques, "step torques")?;
        if joint_torques.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("joint torques"));
        }

        let mut tau = joint_torques.clone();
        self.robot.clamp_torques(&mut tau);

        let fk = forward_kinematics(&self.robot, &state.q)?;

        // External wrenches: grasp coupling and contact penalties.
        let mut tau_ext = DVector::zeros(self.robot.dof());
        let mut q_obj = 0.0;
        if state.grasp_attached {
            let (wrench_arm, q_object, break_now) = self.grasp_coupling(state, &fk);
            if break_now {
                state.grasp_attached = false;
            } else {
                let j = point_jacobian_world(&fk, &fk.ee.translation);
                tau_ext += j.transpose() * wrench_arm;
                q_obj = q_object;
            }
        }
        let contacts = self.contact_query_fk(&fk);
        for c in &contacts {
            let normal = self.contact_normal(&c.location);
            let force = normal * (-c.force); // -c.force > 0, pushes outward
            let j = point_jacobian_world(&fk, &c.location);
            let mut wrench = nalgebra::Vector6::zeros();
            for r in 0..3 {
                wrench[r] = force[r];
            }
            tau_ext += j.transpose() * wrench;
        }
        state.last_contacts = contacts;

        // Arm dynamics: M q̈ = τ + τ_ext - bias(q, q̇).
        let bias = bias_torques(&self.robot, &fk, &state.qd, &self.params.gravity);
        let m = crate::kinematics::joint_space_inertia(&self.robot, &state.q, &fk);
        let rhs = &tau + &tau_ext - bias;
        let qdd = m
            .cholesky()
            .ok_or(Error::NonFinite("joint-space inertia factorization"))?
            .solve(&rhs);

        state.qd += qdd * DT_SIM;
        let dq = &state.qd * DT_SIM;
        state.q += dq;

        // Object joint with stiction, damping, spring, and range stops.
        let (theta, theta_dot) = step_object(
            &self.object,
            state.theta,
            state.theta_dot,
            q_obj,
            DT_SIM,
            self.params.stiction_deadband,
        );
        state.theta = theta;
        state.theta_dot = theta_dot;

        state.tick += 1;
        Ok(())
    }

    /// Coupling wrench on the arm, generalized force on the object joint,
    /// and whether the grasp breaks this step.
    fn grasp_coupling(
        &self,
        state: &WorldState,
        fk: &ForwardKinematics,
    ) -> (nalgebra::Vector6<f64>, f64, bool) {
        let p = &self.params;
        let p_handle = self.handle_world(state.theta);
        let p_ee = fk.ee.translation;
        let v_handle = self.handle_velocity_world(state.theta, state.theta_dot);
        let j = point_jacobian_world(fk, &p_ee);
        let twist = &j * &state.qd;
        let v_ee = Vector3::new(twist[0], twist[1], twist[2]);
        let w_ee = Vector3::new(twist[3], twist[4], twist[5]);

        let separation = p_handle - p_ee;
        let force = separation * p.grasp_stiffness + (v_handle - v_ee) * p.grasp_damping;

        let z_world = self.frame.z_axis();
        let mut moment = Vector3::zeros();
        let mut yaw_torque_on_object = 0.0;
        if self.object.class.grasp_locks_yaw() {
            let r_in_frame = self.frame.pose.rotation.transpose() * fk.ee.rotation;
            let yaw_ee = yaw_of(&r_in_frame);
            let yaw_des = match self.object.joint_type {
                JointType::Revolute => state.theta + state.grasp_yaw_offset,
                JointType::Prismatic => state.grasp_yaw_offset,
            };
            let yaw_rate_des = match self.object.joint_type {
                JointType::Revolute => state.theta_dot,
                JointType::Prismatic => 0.0,
            };
            let yaw_err = wrap_angle(yaw_des - yaw_ee);
            let yaw_rate_err = yaw_rate_des - w_ee.dot(&z_world);
            let n = p.grasp_yaw_stiffness * yaw_err + p.grasp_yaw_damping * yaw_rate_err;
            moment = z_world * n;
            yaw_torque_on_object = n;
        }

        let breaks =
            force.norm() > p.grasp_break_force || separation.norm() > p.grasp_break_distance;

        let mut wrench_arm = nalgebra::Vector6::zeros();
        for r in 0..3 {
            wrench_arm[r] = force[r];
            wrench_arm[r + 3] = moment[r];
        }

        // Reaction on the object, projected onto its joint coordinate.
        let q_obj = match self.object.joint_type {
            JointType::Revolute => {
                let r_vec = p_handle - self.frame.pose.translation;
                z_world.dot(&r_vec.cross(&(-force))) - yaw_torque_on_object
            }
            JointType::Prismatic => z_world.dot(&(-force)),
        };
        (wrench_arm, q_obj, breaks)
    }

    /// Coupling separation (m) between handle and end-effector grasp point.
    pub fn grasp_residual(&self, state: &WorldState) -> Result<f64> {
        let fk = forward_kinematics(&self.robot, &state.q)?;
        Ok((self.handle_world(state.theta) - fk.ee.translation).norm())
    }

    /// Penalty contacts between arm-link capsules and the static obstacles.
    pub fn contact_query(&self, state: &WorldState) -> Result<Vec<Contact>> {
        let fk = forward_kinematics(&self.robot, &state.q)?;
        Ok(self.contact_query_fk(&fk))
    }

    fn contact_query_fk(&self, fk: &ForwardKinematics) -> Vec<Contact> {
        if self.obstacles.is_empty() {
            return Vec::new();
        }
        let mut contacts = Vec::new();
        let k = fk.joint_positions.len();
        for link in 0..k {
            let a = fk.joint_positions[link];
            let b = if link + 1 < k {
                fk.joint_positions[link + 1]
            } else {
                fk.ee.translation
            };
            if (b - a).norm() < 1e-9 {
                continue;
            }
            // Deepest penetration of this link against any obstacle, sampled
            // along the segment; one contact per link.
            let mut worst: Option<(f64, Vector3<f64>)> = None;
            for obstacle in &self.obstacles {
                const SAMPLES: usize = 17;
                for s in 0..SAMPLES {
                    let t = s as f64 / (SAMPLES - 1) as f64;
                    let p = a + (b - a) * t;
                    let depth = self.robot.link_radius - obstacle.signed_distance(&p);
                    if depth > 0.0 && worst.map_or(true, |(d, _)| depth > d) {
                        worst = Some((depth, p));
                    }
                }
            }
            if let Some((depth, location)) = worst {
                contacts.push(Contact {
                    location,
                    force: -self.params.contact_stiffness * depth,
                });
            }
        }
        contacts
    }

    fn contact_normal(&self, p: &Vector3<f64>) -> Vector3<f64> {
        // Outward gradient of the nearest obstacle's signed distance field.
        let mut best = f64::INFINITY;
        let mut normal = Vector3::z();
        for obstacle in &self.obstacles {
            let d = obstacle.signed_distance(p);
            if d < best {
                best = d;
                let eps = 1e-6;
                let mut g = Vector3::zeros();
                for axis in 0..3 {
                    let mut pp = *p;
                    let mut pm = *p;
                    pp[axis] += eps;
                    pm[axis] -= eps;
                    g[axis] = (obstacle.signed_distance(&pp) - obstacle.signed_distance(&pm))
                        / (2.0 * eps);
                }
                if g.norm() > 1e-9 {
                    normal = g.normalize();
                }
            }
        }
        normal
    }

    /// Total mechanical energy of the coupled system (kinetic + springs +
    /// gravity potential), used by conservation checks.
    pub fn total_energy(&self, state: &WorldState) -> Result<f64> {
        let fk = forward_kinematics(&self.robot, &state.q)?;
        let ke_arm = crate::kinematics::kinetic_energy(&self.robot, &state.q, &state.qd)?;
        let ke_obj = 0.5 * self.object.object_inertia * state.theta_dot * state.theta_dot;
        let pe_obj = 0.5
            * self.object.spring_k
            * (state.theta - self.object.spring_rest)
            * (state.theta - self.object.spring_rest);
        let mut pe_grasp = 0.0;
        if state.grasp_attached {
            let sep = self.handle_world(state.theta) - fk.ee.translation;
            pe_grasp += 0.5 * self.params.grasp_stiffness * sep.dot(&sep);
            if self.object.class.grasp_locks_yaw() {
                let r_in_frame = self.frame.pose.rotation.transpose() * fk.ee.rotation;
                let yaw_des = match self.object.joint_type {
                    JointType::Revolute => state.theta + state.grasp_yaw_offset,
                    JointType::Prismatic => state.grasp_yaw_offset,
                };
                let e = wrap_angle(yaw_des - yaw_of(&r_in_frame));
                pe_grasp += 0.5 * self.params.grasp_yaw_stiffness * e * e;
            }
        }
        let pe_gravity: f64 = self
            .robot
            .joints
            .iter()
            .zip(fk.link_frames.iter())
            .map(|(j, f)| -j.mass * self.params.gravity.dot(&f.transform_point(&j.com)))
            .sum();
        Ok(ke_arm + ke_obj + pe_obj + pe_grasp + pe_gravity)
    }
}

/// One semi-implicit Euler step of the object joint.
///
/// `q_obj` is the applied generalized force (coupling reaction). The joint
/// sticks while at rest until the net non-friction force exceeds the dry
/// friction; range ends are hard stops.
pub fn step_object(
    object: &ObjectModel,
    theta: f64,
    theta_dot: f64,
    q_obj: f64,
    dt: f64,
    deadband: f64,
) -> (f64, f64) {
    let spring = -object.spring_k * (theta - object.spring_rest);
    let damping = -object.viscous_damping * theta_dot;
    let driving = q_obj + spring + damping;

    let accel = if theta_dot.abs() < deadband {
        let static_load = q_obj + spring; // damping vanishes at rest
        if static_load.abs() <= object.dry_friction {
            return (theta, 0.0);
        }
        (driving - object.dry_friction * static_load.signum()) / object.object_inertia
    } else {
        (driving - object.dry_friction * theta_dot.signum()) / object.object_inertia
    };

    let mut new_dot = theta_dot + accel * dt;
    // Dry friction must not reverse the motion within a step.
    if theta_dot.abs() >= deadband && new_dot * theta_dot < 0.0 && q_obj.abs() < object.dry_friction
    {
        new_dot = 0.0;
    }
    let mut new_theta = theta + new_dot * dt;
    if new_theta <= object.joint_range.0 {
        new_theta = object.joint_range.0;
        new_dot = 0.0;
    } else if new_theta >= object.joint_range.1 {
        new_theta = object.joint_range.1;
        new_dot = 0.0;
    }
    (new_theta, new_dot)
}

// ---------------------------------------------------------------------------
// Object velocity estimation from end-effector tracking
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityEstimate {
    pub value: f64,
    /// Fewer than two samples seen; the value is a placeholder zero.
    pub cold: bool,
}

/// First-order low-pass estimator of the object joint rate, driven by the
/// end-effector position expressed in the object frame.
#[derive(Debug, Clone)]
pub struct ObjectVelocityEstimator {
    joint_type: JointType,
    dt: f64,
    alpha: f64,
    prev: Option<f64>,
    filtered: f64,
    samples: usize,
}

impl ObjectVelocityEstimator {
    pub fn new(joint_type: JointType, dt: f64, alpha: f64) -> Self {
        ObjectVelocityEstimator {
            joint_type,
            dt,
            alpha,
            prev: None,
            filtered: 0.0,
            samples: 0,
        }
    }

    pub fn reset(&mut self) {
        self.prev = None;
        self.filtered = 0.0;
        self.samples = 0;
    }

    /// Feed one end-effector position in the object frame (policy rate).
    pub fn push(&mut self, ee_in_frame: &Vector3<f64>) -> VelocityEstimate {
        let coordinate = match self.joint_type {
            JointType::Revolute => ee_in_frame.y.atan2(ee_in_frame.x),
            JointType::Prismatic => ee_in_frame.z,
        };
        self.samples += 1;
        let estimate = match self.prev {
            None => {
                self.prev = Some(coordinate);
                return VelocityEstimate {
                    value: 0.0,
                    cold: true,
                };
            }
            Some(prev) => {
                let delta = match self.joint_type {
                    JointType::Revolute => wrap_angle(coordinate - prev),
                    JointType::Prismatic => coordinate - prev,
                };
                delta / self.dt
            }
        };
        self.prev = Some(coordinate);
        self.filtered += self.alpha * (estimate - self.filtered);
        VelocityEstimate {
            value: self.filtered,
            cold: false,
        }
    }

    pub fn value(&self) -> f64 {
        self.filtered
    }
}

/// Estimate from a pose history in one call (at least two samples required
/// for a warm value).
pub fn estimate_object_velocity(
    positions_in_frame: &[Vector3<f64>],
    joint_type: JointType,
    dt: f64,
    alpha: f64,
) -> VelocityEstimate {
    let mut est = ObjectVelocityEstimator::new(joint_type, dt, alpha);
    let mut out = VelocityEstimate {
        value: 0.0,
        cold: true,
    };
    for p in positions_in_frame {
        out = est.push(p);
    }
    out
}

// ---------------------------------------------------------------------------
// Scenario randomization
// ---------------------------------------------------------------------------

/// Randomization ranges for one object class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioRanges {
    pub class: ObjectClass,
    /// Nominal joint position in the world.
    pub center: Vector3<f64>,
    /// Uniform jitter half-width per world axis.
    pub position_jitter: Vector3<f64>,
    /// Joint axis (unit, world).
    pub axis: Vector3<f64>,
    /// Handle direction yaw about the axis, radians.
    pub yaw_range: (f64, f64),
    /// Handle radius (revolute) or handle offset from the joint (prismatic).
    pub radius_range: (f64, f64),
    /// Handle offset along the joint axis.
    pub handle_height: f64,
    pub dry_friction_range: (f64, f64),
    pub damping_range: (f64, f64),
    pub inertia_range: (f64, f64),
    pub joint_range: (f64, f64),
    pub open_sense: f64,
}

fn sample(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if range.1 > range.0 {
        rng.gen_range(range.0..range.1)
    } else {
        range.0
    }
}

/// Deterministic-in-seed scenario sample within the configured ranges.
pub fn randomize_scenario(ranges: &ScenarioRanges, seed: u64) -> Result<ObjectModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axis = ranges.axis.normalize();
    let jitter = Vector3::new(
        sample(&mut rng, (-ranges.position_jitter.x, ranges.position_jitter.x)),
        sample(&mut rng, (-ranges.position_jitter.y, ranges.position_jitter.y)),
        sample(&mut rng, (-ranges.position_jitter.z, ranges.position_jitter.z)),
    );
    let joint_position = ranges.center + jitter;
    let yaw = sample(&mut rng, ranges.yaw_range);
    let radius = sample(&mut rng, ranges.radius_range);
    let dry = sample(&mut rng, ranges.dry_friction_range);
    let damping = sample(&mut rng, ranges.damping_range);
    let inertia = sample(&mut rng, ranges.inertia_range);

    // Handle direction: a reference perpendicular rotated by yaw about the axis.
    let reference = if axis.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let perp = (reference - axis * reference.dot(&axis)).normalize();
    let dir = crate::math::rotation_about(&axis, yaw) * perp;
    let handle = joint_position + dir * radius + axis * ranges.handle_height;

    let mut model = ObjectModel::from_world_geometry(
        ranges.class,
        joint_position,
        axis,
        handle,
        ranges.joint_range,
        dry,
        damping,
        inertia,
    )?;
    model.open_sense = ranges.open_sense;
    model.validate()?;
    Ok(model)
}
