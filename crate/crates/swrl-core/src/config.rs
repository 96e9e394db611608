//! Experiment configuration: one JSON tree covering the robot, scenario
//! randomization, controller, MDP constants, learner hyperparameters, and
//! evaluation protocol. Constants with externally fixed values default to
//! those values here.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::control::ControllerParams;
use crate::error::{Error, Result};
use crate::kinematics::RobotModel;
use crate::object::{ObjectClass, Obstacle};
use crate::sim::{ScenarioRanges, SimParams};
use crate::subspace::{SubspaceDecomposition, TaskAxis};

/// The discrete force-increment action set (N per policy tick).
pub const DELTA_F_SET: [f64; 4] = [0.1, 0.0, -0.1, 1.0];
/// Terminal reward on joint-limit breach or grasp loss.
pub const TERMINAL_PENALTY: f64 = -100.0;
/// Observation window length in policy ticks.
pub const WINDOW_LEN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    FlattenedWindow,
    Recurrent,
}

/// MDP constants of the manipulation environment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdpParams {
    pub delta_f_set: [f64; 4],
    /// Action-smoothness reward weight.
    pub k1: f64,
    /// Collision-penalty reward weight.
    pub k2: f64,
    pub terminal_penalty: f64,
    /// Episode duration in simulated seconds.
    pub episode_duration: f64,
    /// Clamp on each redundant acceleration command (rad/s² or m/s²).
    pub a_max: f64,
    pub window_len: usize,
    /// Low-pass coefficient of the object-velocity estimator.
    pub velocity_filter_alpha: f64,
    /// Velocity band override; defaults to the object class band.
    pub velocity_band: Option<(f64, f64)>,
    /// Task rows used for the logged manipulability; `None` = full Jacobian.
    pub manipulability_rows: Option<Vec<TaskAxis>>,
}

impl Default for MdpParams {
    fn default() -> Self {
        MdpParams {
            delta_f_set: DELTA_F_SET,
            k1: 1.0,
            k2: 0.1,
            terminal_penalty: TERMINAL_PENALTY,
            episode_duration: 20.0,
            a_max: 2.0,
            window_len: WINDOW_LEN,
            velocity_filter_alpha: 0.4,
            velocity_band: None,
            manipulability_rows: None,
        }
    }
}

impl MdpParams {
    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 {
            return Err(Error::config("mdp.window_len", "must be positive"));
        }
        if self.episode_duration <= 0.0 {
            return Err(Error::config("mdp.episode_duration", "must be positive"));
        }
        if self.a_max <= 0.0 {
            return Err(Error::config("mdp.a_max", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.velocity_filter_alpha) {
            return Err(Error::config(
                "mdp.velocity_filter_alpha",
                "must be in [0, 1]",
            ));
        }
        if let Some((lo, hi)) = self.velocity_band {
            if lo >= hi {
                return Err(Error::config("mdp.velocity_band", "low must be below high"));
            }
        }
        Ok(())
    }
}

/// Manual-baseline constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManualParams {
    /// Force step per policy tick when running as the evaluation baseline (N).
    pub delta_f_manual: f64,
    /// Robot joint-limit margin below which the force is driven to zero (rad).
    pub joint_limit_margin: f64,
    /// Velocity deficit beyond which the quantized controller picks the large
    /// force increment, as a fraction of the band low edge.
    pub large_step_fraction: f64,
}

impl Default for ManualParams {
    fn default() -> Self {
        ManualParams {
            delta_f_manual: 0.5,
            joint_limit_margin: 0.1,
            large_step_fraction: 0.5,
        }
    }
}

/// Training hyperparameters shared by the learners.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnerParams {
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub gamma: f64,
    /// Per-policy discount overrides; `None` falls back to `gamma`. Band
    /// regulation benefits from a short credit horizon, survival from a
    /// long one.
    #[serde(default)]
    pub gamma_force: Option<f64>,
    #[serde(default)]
    pub gamma_motion: Option<f64>,
    pub polyak: f64,
    /// Constant added to the value-head bias at initialization; mild
    /// optimism keeps early exploration from collapsing onto do-nothing
    /// actions.
    #[serde(default)]
    pub q_init_bonus: f64,
    pub entropy_alpha: f64,
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub feature_mode: FeatureMode,
    pub replay_capacity: usize,
    /// Mix online and offline replay 1:1 when an offline partition exists.
    pub offline_mixing: bool,
    pub offline_dataset: Option<String>,
    pub episodes: usize,
    pub warmup_steps: usize,
    /// Policy ticks between update rounds.
    pub update_every: usize,
    /// Multi-step TD target length (1 = classic one-step).
    #[serde(default = "default_n_step")]
    pub n_step: usize,
    pub updates_per_round: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the episode budget over which epsilon decays.
    pub epsilon_decay_fraction: f64,
    pub bc_epochs: usize,
    pub bc_lr: f64,
}

fn default_n_step() -> usize {
    1
}

impl Default for LearnerParams {
    fn default() -> Self {
        LearnerParams {
            lr: 3e-4,
            momentum: 0.9,
            batch_size: 256,
            gamma: 0.99,
            gamma_force: None,
            gamma_motion: None,
            polyak: 0.005,
            q_init_bonus: 0.0,
            entropy_alpha: 0.05,
            feature_dim: 128,
            hidden_dim: 64,
            feature_mode: FeatureMode::FlattenedWindow,
            replay_capacity: 60_000,
            offline_mixing: true,
            offline_dataset: None,
            episodes: 200,
            warmup_steps: 1_000,
            update_every: 10,
            n_step: 1,
            updates_per_round: 4,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.4,
            bc_epochs: 40,
            bc_lr: 1e-3,
        }
    }
}

impl LearnerParams {
    pub fn effective_gamma_force(&self) -> f64 {
        self.gamma_force.unwrap_or(self.gamma)
    }

    pub fn effective_gamma_motion(&self) -> f64 {
        self.gamma_motion.unwrap_or(self.gamma)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 || self.bc_lr <= 0.0 {
            return Err(Error::config("learner.lr", "learning rates must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("learner.momentum", "must be in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("learner.batch_size", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config("learner.gamma", "must be in [0, 1]"));
        }
        for (name, g) in [
            ("learner.gamma_force", self.gamma_force),
            ("learner.gamma_motion", self.gamma_motion),
        ] {
            if let Some(g) = g {
                if !(0.0..=1.0).contains(&g) {
                    return Err(Error::config(name, "must be in [0, 1]"));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.polyak) {
            return Err(Error::config("learner.polyak", "must be in [0, 1]"));
        }
        if self.feature_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::config("learner.feature_dim", "must be positive"));
        }
        if self.replay_capacity == 0 {
            return Err(Error::config("learner.replay_capacity", "must be positive"));
        }
        if self.episodes == 0 {
            return Err(Error::config("learner.episodes", "must be positive"));
        }
        if self.update_every == 0 {
            return Err(Error::config("learner.update_every", "must be positive"));
        }
        if self.n_step == 0 {
            return Err(Error::config("learner.n_step", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.epsilon_start)
            || !(0.0..=1.0).contains(&self.epsilon_end)
            || !(0.0..=1.0).contains(&self.epsilon_decay_fraction)
        {
            return Err(Error::config("learner.epsilon", "must be in [0, 1]"));
        }
        Ok(())
    }
}

/// Evaluation protocol constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalParams {
    /// Number of randomized cases.
    pub cases: usize,
    /// First scenario seed; cases use consecutive seeds.
    pub seed_base: u64,
    /// Clip applied to relative-percentage metrics.
    pub rmp_clip: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            cases: 120,
            seed_base: 10_000,
            rmp_clip: 100.0,
        }
    }
}

/// Top-level experiment configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub robot: RobotModel,
    pub scenario: ScenarioRanges,
    #[serde(default)]
    pub decomposition_override: Option<SubspaceDecomposition>,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    pub sim: SimParams,
    pub controller: ControllerParams,
    pub mdp: MdpParams,
    pub manual: ManualParams,
    pub learner: LearnerParams,
    pub eval: EvalParams,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.robot.validate()?;
        self.mdp.validate()?;
        self.learner.validate()?;
        self.controller.validate()?;
        if let Some(d) = &self.decomposition_override {
            d.validate()?;
        }
        for o in &self.obstacles {
            o.validate()?;
        }
        if self.eval.cases == 0 {
            return Err(Error::config("eval.cases", "must be positive"));
        }
        if self.eval.rmp_clip <= 0.0 {
            return Err(Error::config("eval.rmp_clip", "must be positive"));
        }
        Ok(())
    }

    /// Effective velocity band: explicit override or the class default.
    pub fn velocity_band(&self) -> (f64, f64) {
        self.mdp
            .velocity_band
            .unwrap_or_else(|| self.scenario.class.velocity_band())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Stable 64-bit hash of the canonical serialized form, embedded in every
    /// output file so any artifact is reproducible from its header.
    pub fn hash(&self) -> u64 {
        let text = serde_json::to_string(self).expect("config serializes");
        fnv1a64(text.as_bytes())
    }

    pub fn hash_hex(&self) -> String {
        format!("{:016x}", self.hash())
    }

    /// Reduced 3-DOF planar valve world for fast desk-scale training.
    ///
    /// The knob grasp leaves the gripper yaw free, so the decomposition is
    /// `kinematic {x, y}`, `geometric {z, roll, pitch}` (structurally empty
    /// rows of a planar arm), `redundant {yaw}`.
    pub fn planar_valve_desk() -> Self {
        let mut sim = SimParams::default();
        sim.gravity = Vector3::zeros();
        let mut mdp = MdpParams::default();
        mdp.episode_duration = 6.0;
        mdp.a_max = 1.0;
        mdp.manipulability_rows = Some(vec![TaskAxis::X, TaskAxis::Y, TaskAxis::Yaw]);
        let mut learner = LearnerParams::default();
        learner.feature_dim = 48;
        learner.hidden_dim = 32;
        learner.batch_size = 48;
        learner.episodes = 200;
        learner.warmup_steps = 300;
        learner.update_every = 10;
        learner.n_step = 5;
        learner.updates_per_round = 3;
        learner.epsilon_decay_fraction = 0.25;
        learner.epsilon_end = 0.02;
        learner.gamma = 0.95;
        learner.gamma_force = Some(0.98);
        learner.gamma_motion = Some(0.98);
        learner.q_init_bonus = 20.0;
        learner.entropy_alpha = 0.02;
        learner.lr = 1e-3;
        learner.episodes = 160;
        learner.updates_per_round = 3;
        let mut eval = EvalParams::default();
        eval.cases = 20;
        let mut controller = ControllerParams::default();
        // Desk-scale valve torques peak near 1 N·m; a tighter force clamp
        // keeps the discrete force walk in a learnable range.
        controller.f_max = 15.0;
        ScenarioConfig {
            robot: RobotModel::planar_3dof([0.4, 0.35, 0.25]),
            scenario: ScenarioRanges {
                class: ObjectClass::PlanarValve,
                center: Vector3::new(0.55, 0.1, 0.0),
                position_jitter: Vector3::new(0.05, 0.05, 0.0),
                axis: Vector3::z(),
                yaw_range: (-3.1, 3.1),
                radius_range: (0.11, 0.17),
                handle_height: 0.0,
                dry_friction_range: (0.3, 0.8),
                damping_range: (0.2, 0.6),
                inertia_range: (0.04, 0.09),
                joint_range: (-40.0, 40.0),
                open_sense: 1.0,
            },
            decomposition_override: None,
            obstacles: Vec::new(),
            sim,
            controller,
            mdp,
            manual: ManualParams::default(),
            learner,
            eval,
            seed: 0,
        }
    }

    /// Handwheel valve on the 7-DOF reference arm.
    pub fn valve_7dof() -> Self {
        let mut mdp = MdpParams::default();
        mdp.episode_duration = 20.0;
        ScenarioConfig {
            robot: RobotModel::reference_7dof(),
            scenario: ScenarioRanges {
                class: ObjectClass::HandwheelValve,
                center: Vector3::new(0.45, 0.0, 0.55),
                position_jitter: Vector3::new(0.04, 0.04, 0.03),
                axis: Vector3::z(),
                yaw_range: (-3.1, 3.1),
                radius_range: (0.10, 0.18),
                handle_height: 0.0,
                dry_friction_range: (0.3, 1.0),
                damping_range: (0.2, 0.6),
                inertia_range: (0.04, 0.10),
                joint_range: (-40.0, 40.0),
                open_sense: 1.0,
            },
            decomposition_override: None,
            obstacles: Vec::new(),
            sim: SimParams::default(),
            controller: ControllerParams::default(),
            mdp,
            manual: ManualParams::default(),
            learner: LearnerParams::default(),
            eval: EvalParams::default(),
            seed: 0,
        }
    }

    /// Hinged door on the 7-DOF reference arm, with a wall obstacle.
    pub fn door_7dof() -> Self {
        let mut cfg = ScenarioConfig::valve_7dof();
        cfg.scenario = ScenarioRanges {
            class: ObjectClass::Door,
            center: Vector3::new(0.35, -0.45, 0.0),
            position_jitter: Vector3::new(0.03, 0.03, 0.0),
            axis: Vector3::z(),
            yaw_range: (1.35, 1.75),
            radius_range: (0.55, 0.7),
            handle_height: 0.55,
            dry_friction_range: (0.8, 2.5),
            damping_range: (0.5, 1.5),
            inertia_range: (1.5, 3.0),
            joint_range: (0.0, 1.9),
            open_sense: 1.0,
        };
        cfg.mdp.episode_duration = 15.0;
        cfg.eval.cases = 10;
        cfg.obstacles = vec![Obstacle::Halfspace {
            normal: Vector3::new(0.0, 1.0, 0.0),
            offset: -0.75,
        }];
        cfg
    }

    /// Sliding drawer on the 7-DOF reference arm.
    pub fn drawer_7dof() -> Self {
        let mut cfg = ScenarioConfig::valve_7dof();
        cfg.scenario = ScenarioRanges {
            class: ObjectClass::Drawer,
            center: Vector3::new(0.62, 0.0, 0.35),
            position_jitter: Vector3::new(0.03, 0.05, 0.12),
            axis: Vector3::new(-1.0, 0.0, 0.0),
            yaw_range: (0.0, 0.0),
            radius_range: (0.0, 0.02),
            handle_height: 0.02,
            dry_friction_range: (4.0, 10.0),
            damping_range: (2.0, 6.0),
            inertia_range: (2.0, 5.0),
            joint_range: (0.0, 0.55),
            open_sense: 1.0,
        };
        cfg.eval.cases = 10;
        cfg
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "planar_valve_desk" => Ok(Self::planar_valve_desk()),
            "valve_7dof" => Ok(Self::valve_7dof()),
            "door_7dof" => Ok(Self::door_7dof()),
            "drawer_7dof" => Ok(Self::drawer_7dof()),
            other => Err(Error::config(
                "preset",
                format!("unknown preset `{other}`; expected planar_valve_desk, valve_7dof, door_7dof, or drawer_7dof"),
            )),
        }
    }
}

/// FNV-1a 64-bit hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_constants_pinned_in_defaults() {
        let mdp = MdpParams::default();
        assert_eq!(mdp.delta_f_set, [0.1, 0.0, -0.1, 1.0]);
        assert_eq!(mdp.k1, 1.0);
        assert_eq!(mdp.k2, 0.1);
        assert_eq!(mdp.terminal_penalty, -100.0);
        assert_eq!(mdp.window_len, 10);
        assert_eq!(EvalParams::default().rmp_clip, 100.0);
    }

    #[test]
    fn config_roundtrip_idempotent() {
        let cfg = ScenarioConfig::planar_valve_desk();
        let json1 = cfg.to_json_pretty().unwrap();
        let parsed = ScenarioConfig::from_json(&json1).unwrap();
        let json2 = parsed.to_json_pretty().unwrap();
        assert_eq!(json1, json2);
        assert_eq!(cfg.hash(), parsed.hash());
    }

    #[test]
    fn invalid_fields_reported_by_name() {
        let mut cfg = ScenarioConfig::planar_valve_desk();
        cfg.learner.batch_size = 0;
        match cfg.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "learner.batch_size"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn presets_validate() {
        for name in ["planar_valve_desk", "valve_7dof", "door_7dof", "drawer_7dof"] {
            ScenarioConfig::preset(name).unwrap().validate().unwrap();
        }
        assert!(ScenarioConfig::preset("nope").is_err());
    }

    #[test]
    fn hash_sensitive_to_content() {
        let a = ScenarioConfig::planar_valve_desk();
        let mut b = a.clone();
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }
}
