//! The manipulation MDP: a 10-step observation window over joint states,
//! torques, the end-effector pose in the object frame, and the estimated
//! object velocity; a discrete force-increment action paired with a
//! continuous redundant-space acceleration; band-occupancy and smoothness
//! rewards; and the terminal rules.
//!
//! Each policy tick applies the actions through the hybrid controller and
//! advances the world by ten 1 kHz simulation ticks.

use nalgebra::{DVector, Vector6};
use serde::{Deserialize, Serialize};

use crate::config::{MdpParams, ScenarioConfig};
use crate::control::{
    compute_torque, ee_pose_in_frame, geometric_reference, integrate_policy_outputs,
    interpolate_command, pose_coordinates, pose_error, ControllerParams, GraspAnchors,
    HybridCommand, DT_POLICY, TICKS_PER_POLICY,
};
use crate::error::{Error, Result};
use crate::kinematics::{
    bundle_from_fk, forward_kinematics, gravity_torques, manipulability, solve_reach, RobotModel,
};
use crate::object::ObjectModel;
use crate::sim::{randomize_scenario, ObjectVelocityEstimator, World, WorldState};
use crate::subspace::{build_object_frame, decompose, force_direction, SubspaceDecomposition};

/// One observation frame: joint angles, applied torques, the end-effector
/// transform in the object frame (rotation column-major + translation), and
/// the object velocity estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationFrame {
    pub q: Vec<f64>,
    pub tau: Vec<f64>,
    pub ee_pose: [f64; 12],
    pub velocity_estimate: f64,
    /// False for zero-padded pre-warm-up frames.
    pub valid: bool,
}

impl ObservationFrame {
    pub fn zeros(dof: usize) -> Self {
        ObservationFrame {
            q: vec![0.0; dof],
            tau: vec![0.0; dof],
            ee_pose: [0.0; 12],
            velocity_estimate: 0.0,
            valid: false,
        }
    }

    pub fn dim(dof: usize) -> usize {
        2 * dof + 13
    }

    fn write_into(&self, out: &mut Vec<f32>) {
        out.extend(self.q.iter().map(|v| *v as f32));
        out.extend(self.tau.iter().map(|v| *v as f32));
        out.extend(self.ee_pose.iter().map(|v| *v as f32));
        out.push(self.velocity_estimate as f32);
    }
}

/// Rolling window of the most recent observation frames (oldest first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationWindow {
    frames: Vec<ObservationFrame>,
}

impl ObservationWindow {
    pub fn empty(len: usize, dof: usize) -> Self {
        ObservationWindow {
            frames: (0..len).map(|_| ObservationFrame::zeros(dof)).collect(),
        }
    }

    pub fn push(&mut self, frame: ObservationFrame) {
        self.frames.remove(0);
        self.frames.push(frame);
    }

    pub fn frames(&self) -> &[ObservationFrame] {
        &self.frames
    }

    pub fn latest(&self) -> &ObservationFrame {
        self.frames.last().expect("window never empty")
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Flattened feature vector, oldest frame first.
    pub fn flat(&self) -> Vec<f32> {
        let dof = self.frames[0].q.len();
        let mut out = Vec::with_capacity(self.frames.len() * ObservationFrame::dim(dof));
        for f in &self.frames {
            f.write_into(&mut out);
        }
        out
    }
}

/// The pair of policy actions: a discrete force-increment index and the
/// redundant-space acceleration command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionPair {
    /// Index into the discrete force-increment set.
    pub force_idx: usize,
    /// Redundant acceleration, one entry per redundant coordinate.
    pub accel_r: Vec<f64>,
}

impl ActionPair {
    pub fn zeros(redundant_dim: usize) -> Self {
        ActionPair {
            force_idx: 1, // the zero increment in {+0.1, 0, -0.1, +1}
            accel_r: vec![0.0; redundant_dim],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationCause {
    JointLimit,
    GraspLoss,
    Timeout,
}

impl TerminationCause {
    pub fn as_str(&self) -> &'static str {
        match self {
            TerminationCause::JointLimit => "joint_limit",
            TerminationCause::GraspLoss => "grasp_loss",
            TerminationCause::Timeout => "timeout",
        }
    }

    /// Whether the cause is a true MDP terminal (no bootstrap) rather than a
    /// time truncation.
    pub fn is_failure(&self) -> bool {
        !matches!(self, TerminationCause::Timeout)
    }
}

/// Band-occupancy reward: 1 when the estimated object velocity lies inside
/// the desired band, 0 otherwise.
pub fn reward_k(velocity_estimate: f64, band: (f64, f64)) -> f64 {
    if velocity_estimate >= band.0 && velocity_estimate <= band.1 {
        1.0
    } else {
        0.0
    }
}

/// Redundant-motion reward: `1 - k1·‖Δẍ_R‖₁ - k2·Σ max(0, ln(-c_F))`.
///
/// Contacts shallower than 1 N contribute no penalty; the guard keeps the
/// logarithm from rewarding grazing contact.
pub fn reward_r(delta_accel_l1: f64, contact_forces: &[f64], k1: f64, k2: f64) -> f64 {
    let collision: f64 = contact_forces
        .iter()
        .map(|c_f| {
            let magnitude = -c_f;
            if magnitude > 1.0 {
                magnitude.ln()
            } else {
                0.0
            }
        })
        .sum();
    1.0 - k1 * delta_accel_l1 - k2 * collision
}

/// Terminal check: joint-limit breach or grasp loss end the episode with the
/// penalty; reaching the episode duration ends it with zero terminal reward.
pub fn check_terminal(
    robot: &RobotModel,
    state: &WorldState,
    episode_duration: f64,
    terminal_penalty: f64,
) -> (bool, Option<TerminationCause>, f64) {
    for (i, joint) in robot.joints.iter().enumerate() {
        if state.q[i] < joint.q_min || state.q[i] > joint.q_max {
            return (true, Some(TerminationCause::JointLimit), terminal_penalty);
        }
    }
    if !state.grasp_attached {
        return (true, Some(TerminationCause::GraspLoss), terminal_penalty);
    }
    if state.sim_time() >= episode_duration - 1e-9 {
        return (true, Some(TerminationCause::Timeout), 0.0);
    }
    (false, None, 0.0)
}

/// Per-policy-tick record of an episode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub q: Vec<f64>,
    pub theta: f64,
    pub theta_dot: f64,
    pub force: f64,
    pub c_f_sum: f64,
    pub w: f64,
    pub r_k: f64,
    pub r_r: f64,
    pub force_idx: usize,
    pub accel_r: Vec<f64>,
}

/// Per-controller-tick telemetry (1 kHz), kept only when requested.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TickRecord {
    pub t: f64,
    pub q: Vec<f64>,
    pub theta: f64,
    pub theta_dot: f64,
    pub force: f64,
    pub c_f_sum: f64,
    pub w: f64,
}

/// Full episode record.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct EpisodeLog {
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub ticks: Vec<TickRecord>,
    pub terminal_theta: f64,
    pub cause: Option<TerminationCause>,
    pub return_k: f64,
    pub return_r: f64,
    pub sim_duration: f64,
}

impl EpisodeLog {
    /// Trajectory CSV: `t, q.., theta, theta_dot, f, c_f_sum, w`, at 1 kHz if
    /// telemetry was kept, otherwise at the policy rate. `meta` lines are
    /// prefixed with `#`.
    pub fn trajectory_csv(&self, dof: usize, meta: &str) -> String {
        let mut out = String::new();
        out.push_str(&format!("# {meta}\n"));
        out.push('t');
        for i in 0..dof {
            out.push_str(&format!(",q{}", i + 1));
        }
        out.push_str(",theta,theta_dot,f,c_f_sum,w\n");
        let mut write_row =
            |t: f64, q: &[f64], theta: f64, theta_dot: f64, f: f64, cf: f64, w: f64| {
                out.push_str(&format!("{t}"));
                for v in q {
                    out.push_str(&format!(",{v}"));
                }
                out.push_str(&format!(",{theta},{theta_dot},{f},{cf},{w}\n"));
            };
        if self.ticks.is_empty() {
            for s in &self.steps {
                write_row(s.t, &s.q, s.theta, s.theta_dot, s.force, s.c_f_sum, s.w);
            }
        } else {
            for s in &self.ticks {
                write_row(s.t, &s.q, s.theta, s.theta_dot, s.force, s.c_f_sum, s.w);
            }
        }
        out
    }

    /// One-line JSON summary of the episode.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "seed": self.seed,
            "terminal_theta": self.terminal_theta,
            "cause": self.cause.map(|c| c.as_str()),
            "return_k": self.return_k,
            "return_r": self.return_r,
            "steps": self.steps.len(),
            "sim_duration": self.sim_duration,
        })
    }
}

/// Outcome of one environment step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub window: ObservationWindow,
    pub r_k: f64,
    pub r_r: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone)]
pub struct StepInfo {
    pub theta: f64,
    pub theta_dot: f64,
    pub velocity_estimate: f64,
    pub velocity_cold: bool,
    pub force_magnitude: f64,
    pub contact_forces: Vec<f64>,
    pub w: f64,
    pub cause: Option<TerminationCause>,
    pub sim_time: f64,
    /// Redundant acceleration of the previous tick, for smoothness terms.
    pub prev_accel_r: Vec<f64>,
}

/// The manipulation environment: world, controller, estimator, window.
pub struct ManipEnv {
    world: World,
    decomposition: SubspaceDecomposition,
    selection: Vector6<f64>,
    controller: ControllerParams,
    mdp: MdpParams,
    band: (f64, f64),
    anchors: GraspAnchors,
    state: WorldState,
    command: HybridCommand,
    estimator: ObjectVelocityEstimator,
    window: ObservationWindow,
    last_tau: DVector<f64>,
    prev_accel_r: Vec<f64>,
    velocity_estimate: f64,
    velocity_cold: bool,
    done: bool,
    cause: Option<TerminationCause>,
    log: EpisodeLog,
    telemetry: bool,
}

impl ManipEnv {
    /// Build an episode world from the configuration and a scenario seed.
    pub fn from_config(cfg: &ScenarioConfig, seed: u64) -> Result<Self> {
        let object = randomize_scenario(&cfg.scenario, seed)?;
        Self::with_object(cfg, object, seed)
    }

    /// Build an episode around an explicit object sample.
    pub fn with_object(cfg: &ScenarioConfig, object: ObjectModel, seed: u64) -> Result<Self> {
        let robot = cfg.robot.clone();
        robot.validate()?;
        let frame = build_object_frame(&object)?;
        let decomposition = decompose(object.class, cfg.decomposition_override.as_ref())?;
        let selection = decomposition.selection_diag();

        let theta0 = 0.0f64.clamp(object.joint_range.0, object.joint_range.1);
        let world = World::new(robot, object, frame, cfg.obstacles.clone(), cfg.sim.clone());

        // Seat the grasp: drive the end-effector onto the handle.
        let target = world.handle_world(theta0);
        let (q, residual) = solve_reach(&world.robot, &world.robot.nominal_q(), &target, 400, 1e-6)?;
        if residual > cfg.sim.grasp_break_distance {
            return Err(Error::config(
                "scenario",
                format!("grasp target unreachable: residual {residual:.4} m (seed {seed})"),
            ));
        }
        let mut state = WorldState::new(q, theta0);
        let fk = forward_kinematics(&world.robot, &state.q)?;
        world.attach_grasp(&mut state, &fk);

        let ee_in_frame = ee_pose_in_frame(&world.frame.pose, &fk.ee);
        let pose0 = pose_coordinates(&ee_in_frame);
        let anchors = GraspAnchors {
            pose0,
            theta0,
        };
        let mut command = HybridCommand::hold(pose0, 0.0);
        command.force_dir = force_direction(&world.object, theta0)?;

        let estimator = ObjectVelocityEstimator::new(
            world.object.joint_type,
            DT_POLICY,
            cfg.mdp.velocity_filter_alpha,
        );

        let dof = world.robot.dof();
        let mut window = ObservationWindow::empty(cfg.mdp.window_len, dof);
        let band = cfg.velocity_band();

        let mut env = ManipEnv {
            world,
            decomposition,
            selection,
            controller: cfg.controller.clone(),
            mdp: cfg.mdp.clone(),
            band,
            anchors,
            state,
            command,
            estimator,
            window: ObservationWindow::empty(cfg.mdp.window_len, dof),
            last_tau: DVector::zeros(dof),
            prev_accel_r: vec![0.0; 0],
            velocity_estimate: 0.0,
            velocity_cold: true,
            done: false,
            cause: None,
            log: EpisodeLog {
                seed,
                ..EpisodeLog::default()
            },
            telemetry: false,
        };
        env.prev_accel_r = vec![0.0; env.decomposition.redundant_dim()];
        // Initial observation with a cold velocity estimate.
        let frame0 = env.observe()?;
        window.push(frame0);
        env.window = window;
        Ok(env)
    }

    pub fn enable_telemetry(&mut self, on: bool) {
        self.telemetry = on;
    }

    pub fn decomposition(&self) -> &SubspaceDecomposition {
        &self.decomposition
    }

    pub fn redundant_dim(&self) -> usize {
        self.decomposition.redundant_dim()
    }

    pub fn band(&self) -> (f64, f64) {
        self.band
    }

    pub fn robot(&self) -> &RobotModel {
        &self.world.robot
    }

    pub fn object(&self) -> &ObjectModel {
        &self.world.object
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn window(&self) -> &ObservationWindow {
        &self.window
    }

    pub fn log(&self) -> &EpisodeLog {
        &self.log
    }

    pub fn into_log(self) -> EpisodeLog {
        self.log
    }

    pub fn done(&self) -> bool {
        self.done
    }

    pub fn velocity_estimate(&self) -> f64 {
        self.velocity_estimate
    }

    pub fn force_magnitude(&self) -> f64 {
        self.command.force_magnitude
    }

    pub fn mdp(&self) -> &MdpParams {
        &self.mdp
    }

    /// Grasp-coupling residual, for coincidence checks.
    pub fn grasp_residual(&self) -> Result<f64> {
        self.world.grasp_residual(&self.state)
    }

    fn observe(&mut self) -> Result<ObservationFrame> {
        let fk = forward_kinematics(&self.world.robot, &self.state.q)?;
        let ee = ee_pose_in_frame(&self.world.frame.pose, &fk.ee);
        let mut pose = [0.0_f64; 12];
        for c in 0..3 {
            for r in 0..3 {
                pose[c * 3 + r] = ee.rotation[(r, c)];
            }
        }
        pose[9] = ee.translation.x;
        pose[10] = ee.translation.y;
        pose[11] = ee.translation.z;
        Ok(ObservationFrame {
            q: self.state.q.iter().copied().collect(),
            tau: self.last_tau.iter().copied().collect(),
            ee_pose: pose,
            velocity_estimate: self.velocity_estimate,
            valid: true,
        })
    }

    fn block_manipulability(&self, j: &nalgebra::DMatrix<f64>) -> f64 {
        match &self.mdp.manipulability_rows {
            None => manipulability(j),
            Some(rows) => {
                let idx: Vec<usize> = rows.iter().map(|a| a.index()).collect();
                let block = j.select_rows(idx.iter());
                manipulability(&block)
            }
        }
    }

    /// Step with an action from the discrete set × continuous box.
    pub fn step(&mut self, action: &ActionPair) -> Result<StepOutcome> {
        if action.force_idx >= self.mdp.delta_f_set.len() {
            return Err(Error::Usage(format!(
                "force action index {} out of range",
                action.force_idx
            )));
        }
        let delta_f = self.mdp.delta_f_set[action.force_idx];
        let clamped: Vec<f64> = action
            .accel_r
            .iter()
            .map(|a| a.clamp(-self.mdp.a_max, self.mdp.a_max))
            .collect();
        self.step_raw(delta_f, &clamped, action.force_idx)
    }

    /// Step with a raw force increment (used by the manual baseline, which is
    /// not restricted to the discrete set). `force_idx` is recorded for the
    /// log only.
    pub fn step_raw(
        &mut self,
        delta_f: f64,
        accel_r: &[f64],
        force_idx: usize,
    ) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::Usage("step called on a finished episode".into()));
        }
        if accel_r.len() != self.decomposition.redundant_dim() {
            return Err(Error::DimensionMismatch {
                what: "redundant acceleration",
                expected: self.decomposition.redundant_dim(),
                got: accel_r.len(),
            });
        }

        let (x_g, xd_g) = geometric_reference(
            &self.world.object,
            &self.anchors,
            self.state.theta,
            self.world.object.open_sense * self.velocity_estimate,
        );
        let prev = self.command.clone();
        let mut next = integrate_policy_outputs(
            &prev,
            delta_f,
            accel_r,
            (&x_g, &xd_g),
            &self.decomposition,
            self.controller.f_max,
        )?;
        next.force_dir = force_direction(&self.world.object, self.state.theta)?;

        // Ten controller ticks per policy tick, commands interpolated.
        for tick in 1..=TICKS_PER_POLICY {
            let t = tick as f64 / TICKS_PER_POLICY as f64;
            let mut resolved = interpolate_command(&prev, &next, t);
            resolved.force_dir = force_direction(&self.world.object, self.state.theta)?;

            let fk = forward_kinematics(&self.world.robot, &self.state.q)?;
            let bundle = bundle_from_fk(
                &self.world.robot,
                &self.state.q,
                &fk,
                &self.world.frame.pose,
                self.controller.lambda_damp,
            );
            let ee = ee_pose_in_frame(&self.world.frame.pose, &fk.ee);
            let x_err = pose_error(&resolved.x_des, &ee);
            let twist = &bundle.j * &self.state.qd;
            let v_err = resolved.xd_des - Vector6::from_iterator((0..6).map(|i| twist[i]));
            let f_des = resolved.desired_force();
            let gravity_comp = gravity_torques(&self.world.robot, &fk, &self.world.params.gravity);
            let tau = compute_torque(
                &self.world.robot,
                &bundle,
                &self.selection,
                &self.controller.gains,
                &x_err,
                &v_err,
                &f_des,
                &gravity_comp,
            )?;
            self.world.step(&mut self.state, &tau)?;
            self.last_tau = tau;

            if self.telemetry {
                let c_f_sum: f64 = self.state.last_contacts.iter().map(|c| c.force).sum();
                self.log.ticks.push(TickRecord {
                    t: self.state.sim_time(),
                    q: self.state.q.iter().copied().collect(),
                    theta: self.state.theta,
                    theta_dot: self.state.theta_dot,
                    force: resolved.force_magnitude,
                    c_f_sum,
                    w: self.block_manipulability(&bundle.j),
                });
            }
        }
        self.command = next;

        // Object velocity estimated from the end-effector track, at policy rate.
        let fk = forward_kinematics(&self.world.robot, &self.state.q)?;
        let ee_local = self.world.frame.to_frame(&fk.ee.translation);
        let estimate = self.estimator.push(&ee_local);
        self.velocity_estimate = estimate.value;
        self.velocity_cold = estimate.cold;

        let effective_velocity = self.world.object.open_sense * self.velocity_estimate;
        let mut r_k = reward_k(effective_velocity, self.band);
        let delta_accel: f64 = accel_r
            .iter()
            .zip(self.prev_accel_r.iter())
            .map(|(a, b)| (a - b).abs())
            .sum();
        let contact_forces: Vec<f64> = self.state.last_contacts.iter().map(|c| c.force).collect();
        let mut r_r = reward_r(delta_accel, &contact_forces, self.mdp.k1, self.mdp.k2);

        let (done, cause, terminal_reward) = check_terminal(
            &self.world.robot,
            &self.state,
            self.mdp.episode_duration,
            self.mdp.terminal_penalty,
        );
        if done {
            // The terminal reward reaches both policies; it ends their shared
            // episode.
            r_k += terminal_reward;
            r_r += terminal_reward;
            self.done = true;
            self.cause = cause;
        }

        let frame = self.observe()?;
        self.window.push(frame);

        let prev_accel_r = std::mem::replace(&mut self.prev_accel_r, accel_r.to_vec());

        let bundle_j = {
            let b = bundle_from_fk(
                &self.world.robot,
                &self.state.q,
                &fk,
                &self.world.frame.pose,
                self.controller.lambda_damp,
            );
            b.j
        };
        let w = self.block_manipulability(&bundle_j);
        let c_f_sum: f64 = contact_forces.iter().sum();

        self.log.steps.push(StepRecord {
            t: self.state.sim_time(),
            q: self.state.q.iter().copied().collect(),
            theta: self.state.theta,
            theta_dot: self.state.theta_dot,
            force: self.command.force_magnitude,
            c_f_sum,
            w,
            r_k,
            r_r,
            force_idx,
            accel_r: accel_r.to_vec(),
        });
        self.log.return_k += r_k;
        self.log.return_r += r_r;
        self.log.terminal_theta = self.state.theta;
        self.log.cause = self.cause;
        self.log.sim_duration = self.state.sim_time();

        Ok(StepOutcome {
            window: self.window.clone(),
            r_k,
            r_r,
            done: self.done,
            info: StepInfo {
                theta: self.state.theta,
                theta_dot: self.state.theta_dot,
                velocity_estimate: self.velocity_estimate,
                velocity_cold: self.velocity_cold,
                force_magnitude: self.command.force_magnitude,
                contact_forces,
                w,
                cause: self.cause,
                sim_time: self.state.sim_time(),
                prev_accel_r,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;

    fn desk_env(seed: u64) -> ManipEnv {
        let cfg = ScenarioConfig::planar_valve_desk();
        ManipEnv::from_config(&cfg, seed).unwrap()
    }

    #[test]
    fn reward_k_band_membership() {
        assert_eq!(reward_k(0.75, (0.7, 0.8)), 1.0);
        assert_eq!(reward_k(0.5, (0.7, 0.8)), 0.0);
        assert_eq!(reward_k(0.45, (0.4, 0.5)), 1.0);
        assert_eq!(reward_k(0.12, (0.1, 0.15)), 1.0);
        assert_eq!(reward_k(0.16, (0.1, 0.15)), 0.0);
    }

    #[test]
    fn reward_r_formula() {
        assert_eq!(reward_r(0.0, &[], 1.0, 0.1), 1.0);
        let v = reward_r(0.3, &[-2.0], 1.0, 0.1);
        let expected = 1.0 - 0.3 - 0.1 * 2.0_f64.ln();
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 0.6306853).abs() < 1e-6);
        // Shallow contacts are guarded to zero penalty.
        assert_eq!(reward_r(0.0, &[-0.5, -1.0], 1.0, 0.1), 1.0);
        // r_R never exceeds 1.
        assert!(reward_r(0.2, &[-5.0], 1.0, 0.1) <= 1.0);
    }

    #[test]
    fn terminal_rules() {
        let cfg = ScenarioConfig::planar_valve_desk();
        let env = desk_env(3);
        let robot = env.robot().clone();

        let mut state = env.state().clone();
        state.q[1] = robot.joints[1].q_max + 0.01;
        let (done, cause, r) = check_terminal(&robot, &state, cfg.mdp.episode_duration, -100.0);
        assert!(done);
        assert_eq!(cause, Some(TerminationCause::JointLimit));
        assert_eq!(r, -100.0);

        let mut state = env.state().clone();
        state.grasp_attached = false;
        let (done, cause, r) = check_terminal(&robot, &state, cfg.mdp.episode_duration, -100.0);
        assert!(done);
        assert_eq!(cause, Some(TerminationCause::GraspLoss));
        assert_eq!(r, -100.0);

        let state = env.state().clone();
        let (done, cause, r) = check_terminal(&robot, &state, cfg.mdp.episode_duration, -100.0);
        assert!(!done);
        assert_eq!(cause, None);
        assert_eq!(r, 0.0);

        let (done, cause, r) = check_terminal(&robot, &state, 0.0, -100.0);
        assert!(done);
        assert_eq!(cause, Some(TerminationCause::Timeout));
        assert_eq!(r, 0.0);
    }

    #[test]
    fn window_shifts_by_one() {
        let mut env = desk_env(5);
        let n = env.redundant_dim();
        let before = env.window().clone();
        let out = env.step(&ActionPair::zeros(n)).unwrap();
        let after = out.window;
        for i in 0..before.len() - 1 {
            assert_eq!(before.frames()[i + 1], after.frames()[i], "frame {i}");
        }
    }

    #[test]
    fn zero_actions_hold_on_high_friction_valve() {
        let mut cfg = ScenarioConfig::planar_valve_desk();
        cfg.scenario.dry_friction_range = (2.0, 2.5);
        let mut env = ManipEnv::from_config(&cfg, 11).unwrap();
        let n = env.redundant_dim();
        for _ in 0..20 {
            let out = env.step(&ActionPair::zeros(n)).unwrap();
            assert_eq!(out.info.theta, 0.0, "stiction must hold");
            assert_eq!(out.r_k, 0.0);
        }
    }

    #[test]
    fn large_force_action_breaks_stiction() {
        let mut cfg = ScenarioConfig::planar_valve_desk();
        cfg.scenario.dry_friction_range = (0.3, 0.32);
        cfg.scenario.radius_range = (0.14, 0.15);
        let mut env = ManipEnv::from_config(&cfg, 11).unwrap();
        let n = env.redundant_dim();
        let push = ActionPair {
            force_idx: 3, // +1 N per tick
            accel_r: vec![0.0; n],
        };
        let mut moved = false;
        for _ in 0..120 {
            let out = env.step(&push).unwrap();
            if out.info.theta_dot > 0.05 {
                moved = true;
                break;
            }
            if out.done {
                break;
            }
        }
        assert!(moved, "ramping force must eventually break stiction");
    }

    #[test]
    fn grasp_residual_bounded_while_attached() {
        let mut env = desk_env(7);
        let n = env.redundant_dim();
        let push = ActionPair {
            force_idx: 0,
            accel_r: vec![0.0; n],
        };
        for _ in 0..100 {
            let out = env.step(&push).unwrap();
            if out.done {
                break;
            }
            let residual = env.grasp_residual().unwrap();
            assert!(residual < 5e-3, "residual {residual}");
        }
    }

    #[test]
    fn step_after_done_is_usage_error() {
        let mut cfg = ScenarioConfig::planar_valve_desk();
        cfg.mdp.episode_duration = 0.02;
        let mut env = ManipEnv::from_config(&cfg, 2).unwrap();
        let n = env.redundant_dim();
        let a = ActionPair::zeros(n);
        loop {
            let out = env.step(&a).unwrap();
            if out.done {
                assert_eq!(out.info.cause, Some(TerminationCause::Timeout));
                break;
            }
        }
        assert!(matches!(env.step(&a), Err(Error::Usage(_))));
    }

    #[test]
    fn determinism_of_episode() {
        let run = || {
            let mut env = desk_env(9);
            let n = env.redundant_dim();
            let mut acc = Vec::new();
            for i in 0..30 {
                let a = ActionPair {
                    force_idx: i % 4,
                    accel_r: vec![0.3 * ((i % 5) as f64 - 2.0); n],
                };
                let out = env.step(&a).unwrap();
                acc.push((out.info.theta.to_bits(), out.r_k.to_bits(), out.r_r.to_bits()));
                if out.done {
                    break;
                }
            }
            acc
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn returns_monotone_when_idle_and_contact_free() {
        // With zero redundant commands and no contacts, r_R = 1 per step, so
        // the S_R return equals the episode length so far.
        let mut env = desk_env(13);
        let n = env.redundant_dim();
        let a = ActionPair::zeros(n);
        let mut prev_return = 0.0;
        for step in 1..=40 {
            let out = env.step(&a).unwrap();
            assert!(out.r_r <= 1.0 + 1e-12);
            let ret = env.log().return_r;
            assert!(ret > prev_return, "return must grow with length");
            assert!((ret - step as f64).abs() < 1e-9);
            prev_return = ret;
            if out.done {
                break;
            }
        }
    }

    #[test]
    fn trajectory_csv_has_expected_columns() {
        let mut env = desk_env(17);
        env.enable_telemetry(true);
        let n = env.redundant_dim();
        for _ in 0..3 {
            env.step(&ActionPair::zeros(n)).unwrap();
        }
        let dof = env.robot().dof();
        let csv = env.log().trajectory_csv(dof, "config_hash=dead seed=17");
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with('#'));
        assert_eq!(
            lines.next().unwrap(),
            "t,q1,q2,q3,theta,theta_dot,f,c_f_sum,w"
        );
        // 3 policy steps x 10 ticks of telemetry.
        assert_eq!(lines.count(), 30);
    }

    #[test]
    fn window_flat_layout() {
        let env = desk_env(19);
        let flat = env.window().flat();
        let dof = env.robot().dof();
        assert_eq!(flat.len(), 10 * ObservationFrame::dim(dof));
        // Only the newest frame is valid after reset.
        let frames = env.window().frames();
        assert!(frames[..9].iter().all(|f| !f.valid));
        assert!(frames[9].valid);
    }
}
