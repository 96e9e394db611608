//! Differential kinematics and dynamics of the serial arm.
//!
//! Forward kinematics, geometric Jacobians expressed in the object frame,
//! a singularity-robust damped pseudoinverse, the joint-space inertia matrix
//! via the composite-rigid-body algorithm, bias/gravity torques via recursive
//! Newton-Euler, and the manipulability index `w = sqrt(det(J Jᵀ))`.
//!
//! Internal spatial algebra uses Plücker coordinates about the world origin
//! with `[angular; linear]` ordering. Task-space vectors exposed to the rest
//! of the crate use `[linear; angular]` ordering (see `math`).

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{rotation_about, skew, Transform};

/// One revolute joint plus the link it carries.
///
/// `origin` is the fixed transform from the parent link frame to this joint's
/// frame; the joint rotates about `axis` (unit vector in the joint frame).
/// Inertial quantities are expressed in the link frame (joint frame after
/// rotation).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointSpec {
    pub origin: Transform,
    pub axis: Vector3<f64>,
    pub q_min: f64,
    pub q_max: f64,
    pub torque_limit: f64,
    pub mass: f64,
    pub com: Vector3<f64>,
    pub inertia_diag: Vector3<f64>,
}

/// Serial-chain robot description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobotModel {
    pub joints: Vec<JointSpec>,
    /// Fixed transform from the last link frame to the end-effector grasp frame.
    pub ee_offset: Transform,
    /// Capsule radius used by the proxy collision model (m).
    pub link_radius: f64,
}

impl RobotModel {
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.joints.is_empty() {
            return Err(Error::config("robot.joints", "at least one joint required"));
        }
        for (i, j) in self.joints.iter().enumerate() {
            if j.q_min >= j.q_max {
                return Err(Error::config(
                    format!("robot.joints[{i}].q_min"),
                    "q_min must be strictly below q_max",
                ));
            }
            if j.mass <= 0.0 || j.inertia_diag.iter().any(|v| *v <= 0.0) {
                return Err(Error::config(
                    format!("robot.joints[{i}].mass"),
                    "masses and principal inertias must be strictly positive",
                ));
            }
            if (j.axis.norm() - 1.0).abs() > 1e-6 {
                return Err(Error::config(
                    format!("robot.joints[{i}].axis"),
                    "joint axis must be a unit vector",
                ));
            }
            if j.torque_limit <= 0.0 {
                return Err(Error::config(
                    format!("robot.joints[{i}].torque_limit"),
                    "torque limit must be positive",
                ));
            }
        }
        Ok(())
    }

    pub fn check_dim(&self, q: &DVector<f64>, what: &'static str) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::DimensionMismatch {
                what,
                expected: self.dof(),
                got: q.len(),
            });
        }
        Ok(())
    }

    pub fn lower_limits(&self) -> DVector<f64> {
        DVector::from_iterator(self.dof(), self.joints.iter().map(|j| j.q_min))
    }

    pub fn upper_limits(&self) -> DVector<f64> {
        DVector::from_iterator(self.dof(), self.joints.iter().map(|j| j.q_max))
    }

    pub fn clamp_torques(&self, tau: &mut DVector<f64>) {
        for (i, j) in self.joints.iter().enumerate() {
            tau[i] = tau[i].clamp(-j.torque_limit, j.torque_limit);
        }
    }

    /// A centered configuration used as the IK seed and episode start.
    pub fn nominal_q(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.dof(),
            self.joints.iter().map(|j| 0.5 * (j.q_min + j.q_max)),
        )
    }

    /// 7-DOF reference arm with Franka-like published joint limits.
    ///
    /// Link geometry follows the usual alternating-axis layout of that class
    /// of arms; masses and inertias are plausible identification-style values.
    /// These numbers are a modeling choice recorded in configuration, not
    /// manufacturer data.
    pub fn reference_7dof() -> Self {
        let frac = std::f64::consts::FRAC_PI_2;
        // (alpha_prev, a_prev, d) in modified-DH terms; rotation axis is +z of
        // the joint frame, so Rz(q) commutes with the +z offset d.
        let dh: [(f64, f64, f64); 7] = [
            (0.0, 0.0, 0.333),
            (-frac, 0.0, 0.0),
            (frac, 0.0, 0.316),
            (frac, 0.0825, 0.0),
            (-frac, -0.0825, 0.384),
            (frac, 0.0, 0.0),
            (frac, 0.088, 0.0),
        ];
        let q_lims: [(f64, f64); 7] = [
            (-2.8973, 2.8973),
            (-1.7628, 1.7628),
            (-2.8973, 2.8973),
            (-3.0718, -0.0698),
            (-2.8973, 2.8973),
            (-0.0175, 3.7525),
            (-2.8973, 2.8973),
        ];
        let tau_lims = [87.0, 87.0, 87.0, 87.0, 12.0, 12.0, 12.0];
        let masses = [4.97, 0.65, 3.23, 3.59, 1.23, 1.67, 0.74];
        let coms = [
            Vector3::new(0.0, -0.03, -0.08),
            Vector3::new(0.0, -0.07, 0.03),
            Vector3::new(0.04, 0.02, -0.03),
            Vector3::new(-0.04, 0.10, 0.03),
            Vector3::new(0.0, 0.04, -0.10),
            Vector3::new(0.06, -0.01, 0.01),
            Vector3::new(0.01, 0.01, 0.08),
        ];
        let inertias = [
            Vector3::new(0.07, 0.07, 0.01),
            Vector3::new(0.03, 0.01, 0.03),
            Vector3::new(0.04, 0.03, 0.01),
            Vector3::new(0.03, 0.01, 0.03),
            Vector3::new(0.03, 0.03, 0.01),
            Vector3::new(0.005, 0.004, 0.006),
            Vector3::new(0.002, 0.002, 0.003),
        ];
        let joints = (0..7)
            .map(|i| {
                let (alpha, a, d) = dh[i];
                let origin = Transform::from_axis_angle(&Vector3::x(), alpha)
                    .compose(&Transform::from_translation(Vector3::new(a, 0.0, d)));
                JointSpec {
                    origin,
                    axis: Vector3::z(),
                    q_min: q_lims[i].0,
                    q_max: q_lims[i].1,
                    torque_limit: tau_lims[i],
                    mass: masses[i],
                    com: coms[i],
                    inertia_diag: inertias[i],
                }
            })
            .collect();
        RobotModel {
            joints,
            ee_offset: Transform::from_translation(Vector3::new(0.0, 0.0, 0.107)),
            link_radius: 0.05,
        }
    }

    /// 3-link planar arm in the world x-y plane, all joints about +z.
    pub fn planar_3dof(lengths: [f64; 3]) -> Self {
        let masses = [2.0, 1.5, 0.8];
        let q_lims: [(f64, f64); 3] = [(-2.9, 2.9), (-2.6, 2.6), (-2.2, 2.2)];
        let tau_lims = [60.0, 40.0, 20.0];
        let joints = (0..3)
            .map(|i| {
                let offset = if i == 0 {
                    Vector3::zeros()
                } else {
                    Vector3::new(lengths[i - 1], 0.0, 0.0)
                };
                JointSpec {
                    origin: Transform::from_translation(offset),
                    axis: Vector3::z(),
                    q_min: q_lims[i].0,
                    q_max: q_lims[i].1,
                    torque_limit: tau_lims[i],
                    mass: masses[i],
                    com: Vector3::new(lengths[i] / 2.0, 0.0, 0.0),
                    inertia_diag: Vector3::new(
                        1e-3,
                        masses[i] * lengths[i] * lengths[i] / 12.0 + 1e-3,
                        masses[i] * lengths[i] * lengths[i] / 12.0 + 1e-3,
                    ),
                }
            })
            .collect();
        RobotModel {
            joints,
            ee_offset: Transform::from_translation(Vector3::new(lengths[2], 0.0, 0.0)),
            link_radius: 0.04,
        }
    }
}

/// Forward-kinematics result: world frames of every link plus the end-effector.
#[derive(Debug, Clone)]
pub struct ForwardKinematics {
    /// Frame of link i (after the joint rotation), in the world.
    pub link_frames: Vec<Transform>,
    /// World position of joint i's axis point.
    pub joint_positions: Vec<Vector3<f64>>,
    /// World direction of joint i's rotation axis.
    pub joint_axes: Vec<Vector3<f64>>,
    pub ee: Transform,
}

/// Per-configuration kinematic bundle used by the controller.
#[derive(Debug, Clone)]
pub struct JacobianBundle {
    /// 6×k geometric Jacobian, rows `[x,y,z,roll,pitch,yaw]`, in the task frame.
    pub j: DMatrix<f64>,
    /// k×6 damped pseudoinverse of `j`.
    pub j_pinv: DMatrix<f64>,
    /// 6×6 task-space inertia, `J⁺ᵀ M J⁺`.
    pub lambda: Matrix6<f64>,
    /// Manipulability `sqrt(det(J Jᵀ))` of the full Jacobian.
    pub w: f64,
}

pub fn forward_kinematics(model: &RobotModel, q: &DVector<f64>) -> Result<ForwardKinematics> {
    model.check_dim(q, "forward_kinematics q")?;
    let k = model.dof();
    let mut link_frames = Vec::with_capacity(k);
    let mut joint_positions = Vec::with_capacity(k);
    let mut joint_axes = Vec::with_capacity(k);
    let mut t = Transform::identity();
    for (i, joint) in model.joints.iter().enumerate() {
        let pre = t.compose(&joint.origin);
        joint_positions.push(pre.translation);
        joint_axes.push(pre.transform_vector(&joint.axis));
        t = pre.compose(&Transform::from_axis_angle(&joint.axis, q[i]));
        link_frames.push(t);
    }
    let ee = t.compose(&model.ee_offset);
    Ok(ForwardKinematics {
        link_frames,
        joint_positions,
        joint_axes,
        ee,
    })
}

/// World-frame geometric Jacobian of a point `p` rigidly attached downstream
/// of every joint (rows `[linear; angular]`).
pub fn point_jacobian_world(fk: &ForwardKinematics, p: &Vector3<f64>) -> DMatrix<f64> {
    let k = fk.joint_positions.len();
    let mut j = DMatrix::zeros(6, k);
    for i in 0..k {
        let z = fk.joint_axes[i];
        let lin = z.cross(&(p - fk.joint_positions[i]));
        for r in 0..3 {
            j[(r, i)] = lin[r];
            j[(r + 3, i)] = z[r];
        }
    }
    j
}

/// Rotate a world-frame Jacobian into a task frame given by `rotation`
/// (world-from-task).
pub fn jacobian_in_frame(j_world: &DMatrix<f64>, rotation: &Matrix3<f64>) -> DMatrix<f64> {
    let rt = rotation.transpose();
    let k = j_world.ncols();
    let mut j = DMatrix::zeros(6, k);
    for c in 0..k {
        let lin = rt * Vector3::new(j_world[(0, c)], j_world[(1, c)], j_world[(2, c)]);
        let ang = rt * Vector3::new(j_world[(3, c)], j_world[(4, c)], j_world[(5, c)]);
        for r in 0..3 {
            j[(r, c)] = lin[r];
            j[(r + 3, c)] = ang[r];
        }
    }
    j
}

/// Smallest singular value of `j`, from the eigenvalues of `J Jᵀ`.
pub fn min_singular_value(j: &DMatrix<f64>) -> f64 {
    let jjt = j * j.transpose();
    let eig = jjt.symmetric_eigenvalues();
    eig.iter().fold(f64::INFINITY, |m, v| m.min(*v)).max(0.0).sqrt()
}

/// Damped pseudoinverse `Jᵀ (J Jᵀ + λ² I)⁻¹` with filtered damping.
///
/// The damping magnitude tapers with the smallest singular value: full
/// `lambda_damp` below `2·λ`, zero above `10·λ`. The pseudoinverse is exact
/// in the well-conditioned region and stays bounded by `1/(2·λ)` everywhere.
pub fn damped_pinv(j: &DMatrix<f64>, lambda_damp: f64) -> DMatrix<f64> {
    let sigma_min = min_singular_value(j);
    let lambda = filtered_damping(sigma_min, lambda_damp);
    let mut jjt = j * j.transpose();
    for i in 0..6 {
        jjt[(i, i)] += lambda * lambda;
    }
    let inv = invert_spd6(&jjt);
    j.transpose() * inv
}

fn filtered_damping(sigma_min: f64, lambda_damp: f64) -> f64 {
    if lambda_damp <= 0.0 {
        return 0.0;
    }
    let lo = 2.0 * lambda_damp;
    let hi = 10.0 * lambda_damp;
    if sigma_min <= lo {
        lambda_damp
    } else if sigma_min >= hi {
        0.0
    } else {
        lambda_damp * (hi - sigma_min) / (hi - lo)
    }
}

fn invert_spd6(m: &DMatrix<f64>) -> DMatrix<f64> {
    debug_assert_eq!(m.nrows(), 6);
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .unwrap_or_else(|| {
            // Fall back to a heavier regularization if rounding broke SPD.
            let mut r = m.clone();
            for i in 0..6 {
                r[(i, i)] += 1e-9;
            }
            r.cholesky().expect("regularized 6x6 Gram matrix is SPD").inverse()
        })
}

/// Manipulability index `sqrt(det(J Jᵀ))` of a full Jacobian or row block.
pub fn manipulability(j: &DMatrix<f64>) -> f64 {
    let jjt = j * j.transpose();
    jjt.determinant().max(0.0).sqrt()
}

/// Full kinematic bundle at `q`, expressed in the task frame `frame`
/// (world-from-task transform; pass identity for the world frame).
pub fn geometric_jacobian(
    model: &RobotModel,
    q: &DVector<f64>,
    frame: &Transform,
    lambda_damp: f64,
) -> Result<JacobianBundle> {
    let fk = forward_kinematics(model, q)?;
    Ok(bundle_from_fk(model, q, &fk, frame, lambda_damp))
}

pub fn bundle_from_fk(
    model: &RobotModel,
    q: &DVector<f64>,
    fk: &ForwardKinematics,
    frame: &Transform,
    lambda_damp: f64,
) -> JacobianBundle {
    let j_world = point_jacobian_world(fk, &fk.ee.translation);
    let j = jacobian_in_frame(&j_world, &frame.rotation);
    let j_pinv = damped_pinv(&j, lambda_damp);
    let m = joint_space_inertia(model, q, fk);
    let lam_dyn = j_pinv.transpose() * &m * &j_pinv;
    let mut lambda = Matrix6::zeros();
    for r in 0..6 {
        for c in 0..6 {
            lambda[(r, c)] = lam_dyn[(r, c)];
        }
    }
    // Symmetrize away the last bits of rounding; the product is symmetric
    // analytically.
    lambda = (lambda + lambda.transpose()) * 0.5;
    let w = manipulability(&j);
    JacobianBundle {
        j,
        j_pinv,
        lambda,
        w,
    }
}

// ---------------------------------------------------------------------------
// Spatial dynamics: CRBA inertia and RNE bias torques
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
struct Spatial {
    ang: Vector3<f64>,
    lin: Vector3<f64>,
}

impl Spatial {
    fn zero() -> Self {
        Spatial {
            ang: Vector3::zeros(),
            lin: Vector3::zeros(),
        }
    }

    fn scale(&self, s: f64) -> Self {
        Spatial {
            ang: self.ang * s,
            lin: self.lin * s,
        }
    }

    fn add(&self, o: &Spatial) -> Self {
        Spatial {
            ang: self.ang + o.ang,
            lin: self.lin + o.lin,
        }
    }

    fn dot(&self, o: &Spatial) -> f64 {
        self.ang.dot(&o.ang) + self.lin.dot(&o.lin)
    }

    /// Motion cross product `self ×_m m`.
    fn cross_motion(&self, m: &Spatial) -> Spatial {
        Spatial {
            ang: self.ang.cross(&m.ang),
            lin: self.ang.cross(&m.lin) + self.lin.cross(&m.ang),
        }
    }

    /// Force cross product `self ×_f f`.
    fn cross_force(&self, f: &Spatial) -> Spatial {
        Spatial {
            ang: self.ang.cross(&f.ang) + self.lin.cross(&f.lin),
            lin: self.ang.cross(&f.lin),
        }
    }
}

/// Spatial inertia about the world origin: rotational block, coupling, mass.
#[derive(Debug, Clone)]
struct SpatialInertia {
    rot: Matrix3<f64>,
    coupling: Matrix3<f64>, // m·[c]×
    mass: f64,
}

impl SpatialInertia {
    fn about_origin(mass: f64, com_world: &Vector3<f64>, inertia_com_world: &Matrix3<f64>) -> Self {
        let c = com_world;
        let parallel = Matrix3::identity() * c.dot(c) - c * c.transpose();
        SpatialInertia {
            rot: inertia_com_world + parallel * mass,
            coupling: skew(c) * mass,
            mass,
        }
    }

    fn add(&self, o: &SpatialInertia) -> SpatialInertia {
        SpatialInertia {
            rot: self.rot + o.rot,
            coupling: self.coupling + o.coupling,
            mass: self.mass + o.mass,
        }
    }

    fn mul(&self, v: &Spatial) -> Spatial {
        Spatial {
            ang: self.rot * v.ang + self.coupling * v.lin,
            lin: self.coupling.transpose() * v.ang + v.lin * self.mass,
        }
    }
}

fn motion_subspaces(fk: &ForwardKinematics) -> Vec<Spatial> {
    fk.joint_axes
        .iter()
        .zip(fk.joint_positions.iter())
        .map(|(z, p)| Spatial {
            ang: *z,
            lin: p.cross(z),
        })
        .collect()
}

fn link_inertias_world(model: &RobotModel, fk: &ForwardKinematics) -> Vec<SpatialInertia> {
    model
        .joints
        .iter()
        .zip(fk.link_frames.iter())
        .map(|(joint, frame)| {
            let com_world = frame.transform_point(&joint.com);
            let r = frame.rotation;
            let i_com = r * Matrix3::from_diagonal(&joint.inertia_diag) * r.transpose();
            SpatialInertia::about_origin(joint.mass, &com_world, &i_com)
        })
        .collect()
}

/// Joint-space inertia matrix `M(q)` by the composite-rigid-body method.
pub fn joint_space_inertia(
    model: &RobotModel,
    _q: &DVector<f64>,
    fk: &ForwardKinematics,
) -> DMatrix<f64> {
    let k = model.dof();
    let s = motion_subspaces(fk);
    let inertias = link_inertias_world(model, fk);

    // Composite inertia supported by joint i: links i..k.
    let mut composite = inertias;
    for i in (0..k.saturating_sub(1)).rev() {
        composite[i] = composite[i].add(&composite[i + 1]);
    }

    let mut m = DMatrix::zeros(k, k);
    for i in 0..k {
        let f = composite[i].mul(&s[i]);
        for j in 0..=i {
            let v = s[j].dot(&f);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

pub fn joint_space_inertia_at(model: &RobotModel, q: &DVector<f64>) -> Result<DMatrix<f64>> {
    let fk = forward_kinematics(model, q)?;
    Ok(joint_space_inertia(model, q, &fk))
}

/// Bias torques `C(q,q̇)q̇ + g(q)` by recursive Newton-Euler with q̈ = 0.
pub fn bias_torques(
    model: &RobotModel,
    fk: &ForwardKinematics,
    qd: &DVector<f64>,
    gravity: &Vector3<f64>,
) -> DVector<f64> {
    rnea(model, fk, qd, gravity)
}

/// Gravity-compensation torques `g(q)`.
pub fn gravity_torques(
    model: &RobotModel,
    fk: &ForwardKinematics,
    gravity: &Vector3<f64>,
) -> DVector<f64> {
    let qd = DVector::zeros(model.dof());
    rnea(model, fk, &qd, gravity)
}

fn rnea(
    model: &RobotModel,
    fk: &ForwardKinematics,
    qd: &DVector<f64>,
    gravity: &Vector3<f64>,
) -> DVector<f64> {
    let k = model.dof();
    let s = motion_subspaces(fk);
    let inertias = link_inertias_world(model, fk);

    let mut v = Spatial::zero();
    // Gravity enters as a fictitious base acceleration of -g.
    let mut a = Spatial {
        ang: Vector3::zeros(),
        lin: -gravity,
    };
    let mut forces = Vec::with_capacity(k);
    for i in 0..k {
        let vj = s[i].scale(qd[i]);
        v = v.add(&vj);
        a = a.add(&v.cross_motion(&vj));
        let momentum = inertias[i].mul(&v);
        let f = inertias[i].mul(&a).add(&v.cross_force(&momentum));
        forces.push(f);
    }
    let mut tau = DVector::zeros(k);
    let mut f_total = Spatial::zero();
    for i in (0..k).rev() {
        f_total = f_total.add(&forces[i]);
        tau[i] = s[i].dot(&f_total);
    }
    tau
}

/// Kinetic energy `½ q̇ᵀ M(q) q̇` through the inertia matrix.
pub fn kinetic_energy(model: &RobotModel, q: &DVector<f64>, qd: &DVector<f64>) -> Result<f64> {
    let m = joint_space_inertia_at(model, q)?;
    Ok(0.5 * qd.dot(&(&m * qd)))
}

// ---------------------------------------------------------------------------
// Damped-least-squares reach (used to seat the initial grasp)
// ---------------------------------------------------------------------------

/// Iteratively move the end-effector to a world target position, respecting
/// joint limits. Returns the configuration and the final residual.
pub fn solve_reach(
    model: &RobotModel,
    q_seed: &DVector<f64>,
    target: &Vector3<f64>,
    max_iters: usize,
    tolerance: f64,
) -> Result<(DVector<f64>, f64)> {
    model.check_dim(q_seed, "solve_reach q_seed")?;
    let mut q = q_seed.clone();
    let lo = model.lower_limits();
    let hi = model.upper_limits();
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        let fk = forward_kinematics(model, &q)?;
        let err = target - fk.ee.translation;
        residual = err.norm();
        if residual < tolerance {
            break;
        }
        let j_world = point_jacobian_world(&fk, &fk.ee.translation);
        let j_pos = j_world.rows(0, 3).into_owned();
        // Damped least squares on the positional block.
        let mut jjt = &j_pos * j_pos.transpose();
        for i in 0..3 {
            jjt[(i, i)] += 1e-4;
        }
        let chol = match jjt.cholesky() {
            Some(c) => c,
            None => break,
        };
        let rhs = chol.solve(&DVector::from_column_slice(err.as_slice()));
        let dq = j_pos.transpose() * rhs;
        let step = 0.5;
        for i in 0..q.len() {
            q[i] = (q[i] + step * dq[i]).clamp(lo[i] + 1e-3, hi[i] - 1e-3);
        }
    }
    Ok((q, residual))
}

/// Angle-axis rotation helper re-exported for tests of frame invariance.
pub fn rotate_task_rows(j: &DMatrix<f64>, rotation: &Matrix3<f64>) -> DMatrix<f64> {
    jacobian_in_frame(j, &rotation.transpose())
}

/// Selection of task rows as a 6×6 diagonal 0/1 matrix from an index set.
pub fn selection_from_rows(rows: &[usize]) -> Matrix6<f64> {
    let mut s = Matrix6::zeros();
    for &r in rows {
        s[(r, r)] = 1.0;
    }
    s
}

/// Elementwise-diagonal product `diag(d) * v` for 6-vectors.
pub fn diag_mul(d: &Vector6<f64>, v: &Vector6<f64>) -> Vector6<f64> {
    Vector6::from_iterator((0..6).map(|i| d[i] * v[i]))
}

pub fn rotation_z(angle: f64) -> Matrix3<f64> {
    rotation_about(&Vector3::z(), angle)
}
