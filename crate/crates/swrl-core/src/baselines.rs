//! The manual controller baseline and the evaluation actor abstraction.
//!
//! The manual method freezes the redundant coordinates at their grasp values
//! and regulates the force magnitude by a discrete band schedule: raise it
//! below the desired velocity band, lower it above, and drive it to zero
//! whenever a robot joint approaches its limit.

use crate::config::{ManualParams, MdpParams};
use crate::env::{ActionPair, ManipEnv, ObservationWindow};

/// Action handed to the environment by an evaluation actor: either an action
/// pair from the discrete set, or a raw force increment for controllers that
/// are not bound to the set.
#[derive(Debug, Clone)]
pub enum EnvAction {
    Pair(ActionPair),
    Raw { delta_f: f64, accel_r: Vec<f64> },
}

/// Deterministic evaluation-time policy.
pub trait EvalActor: Sync {
    fn act(&self, env: &ManipEnv) -> EnvAction;
    fn name(&self) -> &'static str;
}

#[derive(Debug, Clone)]
pub struct ManualPolicy {
    pub delta_f_manual: f64,
    pub band: (f64, f64),
    pub joint_limit_margin: f64,
    pub large_step_fraction: f64,
    /// Joint limits of the robot the policy watches.
    pub limits: Vec<(f64, f64)>,
    pub redundant_dim: usize,
    pub open_sense: f64,
    pub delta_f_set: [f64; 4],
    /// Emit actions from the discrete set (dataset collection) instead of
    /// raw ±`delta_f_manual` steps (evaluation baseline).
    pub quantize: bool,
}

impl ManualPolicy {
    pub fn from_env(params: &ManualParams, mdp: &MdpParams, env: &ManipEnv, quantize: bool) -> Self {
        ManualPolicy {
            delta_f_manual: params.delta_f_manual,
            band: env.band(),
            joint_limit_margin: params.joint_limit_margin,
            large_step_fraction: params.large_step_fraction,
            limits: env
                .robot()
                .joints
                .iter()
                .map(|j| (j.q_min, j.q_max))
                .collect(),
            redundant_dim: env.redundant_dim(),
            open_sense: env.object().open_sense,
            delta_f_set: mdp.delta_f_set,
            quantize,
        }
    }

    fn near_limit(&self, q: &[f64]) -> bool {
        q.iter().zip(self.limits.iter()).any(|(qi, (lo, hi))| {
            *qi < lo + self.joint_limit_margin || *qi > hi - self.joint_limit_margin
        })
    }

    fn index_of(&self, value: f64) -> usize {
        self.delta_f_set
            .iter()
            .position(|v| *v == value)
            .expect("value from the action set")
    }

    /// The band schedule on the latest observation frame.
    pub fn decide(&self, window: &ObservationWindow) -> EnvAction {
        let frame = window.latest();
        let v = self.open_sense * frame.velocity_estimate;
        let accel_r = vec![0.0; self.redundant_dim];

        if self.quantize {
            let idx = if self.near_limit(&frame.q) {
                self.index_of(-0.1)
            } else if v < self.band.0 {
                if v < self.band.0 * self.large_step_fraction {
                    self.index_of(1.0)
                } else {
                    self.index_of(0.1)
                }
            } else if v > self.band.1 {
                self.index_of(-0.1)
            } else {
                self.index_of(0.0)
            };
            EnvAction::Pair(ActionPair {
                force_idx: idx,
                accel_r,
            })
        } else {
            let delta_f = if self.near_limit(&frame.q) {
                -self.delta_f_manual
            } else if v < self.band.0 {
                self.delta_f_manual
            } else if v > self.band.1 {
                -self.delta_f_manual
            } else {
                0.0
            };
            EnvAction::Raw { delta_f, accel_r }
        }
    }
}

impl EvalActor for ManualPolicy {
    fn act(&self, env: &ManipEnv) -> EnvAction {
        self.decide(env.window())
    }

    fn name(&self) -> &'static str {
        "manual"
    }
}
