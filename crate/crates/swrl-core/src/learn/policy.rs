//! Evaluation-time adapters wrapping learners (and ablations of them) behind
//! the deterministic actor interface.

use crate::baselines::{EnvAction, EvalActor, ManualPolicy};
use crate::env::{ActionPair, ManipEnv};

use super::bc::BcPolicy;
use super::dqn::DiscreteQLearner;
use super::features::ObsScaler;
use super::sac::ContinuousActorCritic;
use super::vanilla::HybridSingleLearner;

/// Both trained policies acting in parallel (greedy / squashed-mean).
pub struct SwrlActor {
    pub policy_k: DiscreteQLearner,
    pub policy_r: ContinuousActorCritic,
    pub scaler: ObsScaler,
}

impl EvalActor for SwrlActor {
    fn act(&self, env: &ManipEnv) -> EnvAction {
        let input = self.scaler.apply(&env.window().flat());
        EnvAction::Pair(ActionPair {
            force_idx: self.policy_k.act_greedy(&input),
            accel_r: self.policy_r.mean_action(&input),
        })
    }

    fn name(&self) -> &'static str {
        "swrl"
    }
}

/// Ablation: learned force policy, redundant coordinates frozen at zero.
pub struct SwrlForceOnlyActor {
    pub policy_k: DiscreteQLearner,
    pub scaler: ObsScaler,
    pub redundant_dim: usize,
}

impl EvalActor for SwrlForceOnlyActor {
    fn act(&self, env: &ManipEnv) -> EnvAction {
        let input = self.scaler.apply(&env.window().flat());
        EnvAction::Pair(ActionPair {
            force_idx: self.policy_k.act_greedy(&input),
            accel_r: vec![0.0; self.redundant_dim],
        })
    }

    fn name(&self) -> &'static str {
        "swrl_sk"
    }
}

/// Ablation: learned redundant motion, manual band schedule for the force.
pub struct SwrlMotionOnlyActor {
    pub policy_r: ContinuousActorCritic,
    pub scaler: ObsScaler,
    pub manual: ManualPolicy,
}

impl EvalActor for SwrlMotionOnlyActor {
    fn act(&self, env: &ManipEnv) -> EnvAction {
        let input = self.scaler.apply(&env.window().flat());
        let accel_r = self.policy_r.mean_action(&input);
        match self.manual.decide(env.window()) {
            EnvAction::Pair(pair) => EnvAction::Pair(ActionPair {
                force_idx: pair.force_idx,
                accel_r,
            }),
            EnvAction::Raw { delta_f, .. } => EnvAction::Raw { delta_f, accel_r },
        }
    }

    fn name(&self) -> &'static str {
        "swrl_sr"
    }
}

/// Single-policy baseline actor.
pub struct VanillaActor {
    pub policy: HybridSingleLearner,
    pub scaler: ObsScaler,
}

impl EvalActor for VanillaActor {
    fn act(&self, env: &ManipEnv) -> EnvAction {
        let input = self.scaler.apply(&env.window().flat());
        let (force_idx, accel_r) = self.policy.mean_action(&input);
        EnvAction::Pair(ActionPair { force_idx, accel_r })
    }

    fn name(&self) -> &'static str {
        "vanilla_rl"
    }
}

/// Behavior-cloning actor.
pub struct BcActor {
    pub policy: BcPolicy,
    pub scaler: ObsScaler,
}

impl EvalActor for BcActor {
    fn act(&self, env: &ManipEnv) -> EnvAction {
        let input = self.scaler.apply(&env.window().flat());
        let (force_idx, accel_r) = self.policy.act(&input);
        EnvAction::Pair(ActionPair { force_idx, accel_r })
    }

    fn name(&self) -> &'static str {
        "bc"
    }
}
