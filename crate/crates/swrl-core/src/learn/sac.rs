//! Continuous-action learner for the redundant-motion policy: a squashed
//! Gaussian actor with clipped double critics, Polyak-averaged targets, and
//! a fixed entropy bonus.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::LearnerParams;
use crate::error::{Error, Result};

use super::dqn::build_extractor;
use super::net::{Activation, MlpShape, WindowNet};
use super::optim::{polyak_update, SgdMomentum};

const LOG_STD_MIN: f64 = -5.0;
const LOG_STD_MAX: f64 = 2.0;
const SQUASH_EPS: f64 = 1e-6;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Standard normal sample via Box-Muller, deterministic in the generator.
pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[derive(Debug, Clone)]
pub struct ContinuousBatchItem {
    pub window: Vec<f64>,
    pub next_window: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub mask: f64,
}

#[derive(Debug, Clone)]
pub struct ContinuousActorCritic {
    pub actor: WindowNet,
    pub q1: WindowNet,
    pub q2: WindowNet,
    q1_target: WindowNet,
    q2_target: WindowNet,
    opt_actor: SgdMomentum,
    opt_q1: SgdMomentum,
    opt_q2: SgdMomentum,
    pub gamma: f64,
    polyak: f64,
    pub alpha: f64,
    pub a_max: f64,
    pub action_dim: usize,
}

/// Intermediate quantities of one squashed-Gaussian sample.
#[derive(Debug, Clone)]
struct SampleAux {
    log_std: Vec<f64>,
    xi: Vec<f64>,
    u: Vec<f64>,
    action: Vec<f64>,
}

impl ContinuousActorCritic {
    pub fn new(
        frame_dim: usize,
        window_len: usize,
        action_dim: usize,
        a_max: f64,
        cfg: &LearnerParams,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor_head = MlpShape::new(
            vec![cfg.feature_dim, cfg.hidden_dim, 2 * action_dim],
            vec![Activation::Tanh, Activation::Linear],
        );
        let critic_head = MlpShape::new(
            vec![cfg.feature_dim + action_dim, cfg.hidden_dim, 1],
            vec![Activation::Tanh, Activation::Linear],
        );
        let make_ext = || build_extractor(cfg.feature_mode, frame_dim, window_len, cfg.feature_dim);
        let mut actor = WindowNet::new(make_ext(), actor_head, 0, &mut rng);
        // Keep the squashed mean unsaturated at start and the policy spread
        // moderate.
        actor.scale_final_linear(0.05);
        let p = actor.params.len();
        for b in actor.params[p - action_dim..].iter_mut() {
            *b = -0.5;
        }
        let q1 = WindowNet::new(make_ext(), critic_head.clone(), action_dim, &mut rng);
        let q2 = WindowNet::new(make_ext(), critic_head, action_dim, &mut rng);
        let q1_target = q1.clone();
        let q2_target = q2.clone();
        ContinuousActorCritic {
            opt_actor: SgdMomentum::new(cfg.lr, cfg.momentum, actor.num_params()),
            opt_q1: SgdMomentum::new(cfg.lr, cfg.momentum, q1.num_params()),
            opt_q2: SgdMomentum::new(cfg.lr, cfg.momentum, q2.num_params()),
            actor,
            q1,
            q2,
            q1_target,
            q2_target,
            gamma: cfg.effective_gamma_motion(),
            polyak: cfg.polyak,
            alpha: cfg.entropy_alpha,
            a_max,
            action_dim,
        }
    }

    fn head_split(&self, out: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
        let n = self.action_dim;
        let mu = out[..n].to_vec();
        let mut log_std = Vec::with_capacity(n);
        let mut in_range = Vec::with_capacity(n);
        for raw in &out[n..2 * n] {
            in_range.push(*raw > LOG_STD_MIN && *raw < LOG_STD_MAX);
            log_std.push(raw.clamp(LOG_STD_MIN, LOG_STD_MAX));
        }
        (mu, log_std, in_range)
    }

    fn sample_aux(&self, window: &[f64], xi: &[f64]) -> SampleAux {
        let out = self.actor.forward(window, &[]);
        let (mu, log_std, _) = self.head_split(&out);
        let u: Vec<f64> = (0..self.action_dim)
            .map(|j| mu[j] + log_std[j].exp() * xi[j])
            .collect();
        let action: Vec<f64> = u.iter().map(|u| self.a_max * u.tanh()).collect();
        SampleAux {
            log_std,
            xi: xi.to_vec(),
            u,
            action,
        }
    }

    fn log_prob(&self, aux: &SampleAux) -> f64 {
        let mut lp = 0.0;
        for j in 0..self.action_dim {
            let t = aux.u[j].tanh();
            lp += -0.5 * aux.xi[j] * aux.xi[j] - aux.log_std[j] - HALF_LN_2PI
                - (self.a_max * (1.0 - t * t) + SQUASH_EPS).ln();
        }
        lp
    }

    /// Stochastic action for exploration; bounded by `a_max` via tanh.
    pub fn sample_action(&self, window: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let xi: Vec<f64> = (0..self.action_dim).map(|_| standard_normal(rng)).collect();
        self.sample_aux(window, &xi).action
    }

    /// Deterministic action for evaluation: the squashed mean.
    pub fn mean_action(&self, window: &[f64]) -> Vec<f64> {
        let out = self.actor.forward(window, &[]);
        let (mu, _, _) = self.head_split(&out);
        mu.iter().map(|m| self.a_max * m.tanh()).collect()
    }

    fn min_q_target(&self, window: &[f64], action: &[f64]) -> f64 {
        let q1 = self.q1_target.forward(window, action)[0];
        let q2 = self.q2_target.forward(window, action)[0];
        q1.min(q2)
    }

    /// One gradient step; returns (critic loss, actor loss).
    pub fn update(
        &mut self,
        batch: &[ContinuousBatchItem],
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, f64)> {
        if batch.is_empty() {
            return Ok((0.0, 0.0));
        }
        let inv_b = 1.0 / batch.len() as f64;

        // Critic regression toward entropy-regularized TD targets.
        let mut targets = Vec::with_capacity(batch.len());
        for item in batch {
            let xi: Vec<f64> = (0..self.action_dim).map(|_| standard_normal(rng)).collect();
            let aux = self.sample_aux(&item.next_window, &xi);
            let q_next = self.min_q_target(&item.next_window, &aux.action);
            let v_next = q_next - self.alpha * self.log_prob(&aux);
            targets.push(item.reward + self.gamma * item.mask * v_next);
        }
        let mut critic_loss = 0.0;
        for (critic, opt) in [
            (&mut self.q1, &mut self.opt_q1),
            (&mut self.q2, &mut self.opt_q2),
        ] {
            let mut grad = critic.zeros_like_params();
            for (item, y) in batch.iter().zip(targets.iter()) {
                let (q, cache) = critic.forward_cached(&item.window, &item.action);
                let td = q[0] - y;
                critic_loss += 0.5 * td * td * inv_b;
                critic.backward(&cache, &[2.0 * td * inv_b], &mut grad);
            }
            opt.step(&mut critic.params, &grad);
        }
        if !critic_loss.is_finite() {
            return Err(Error::Diverged(format!("critic loss {critic_loss}")));
        }

        // Actor ascent on min-Q with entropy bonus, by reparameterization.
        let xis: Vec<Vec<f64>> = batch
            .iter()
            .map(|_| (0..self.action_dim).map(|_| standard_normal(rng)).collect())
            .collect();
        let windows: Vec<&[f64]> = batch.iter().map(|b| b.window.as_slice()).collect();
        let (actor_loss, actor_grad) = self.actor_loss_grad(&windows, &xis);
        if !actor_loss.is_finite() {
            return Err(Error::Diverged(format!("actor loss {actor_loss}")));
        }
        self.opt_actor.step(&mut self.actor.params, &actor_grad);

        polyak_update(&mut self.q1_target.params, &self.q1.params, self.polyak);
        polyak_update(&mut self.q2_target.params, &self.q2.params, self.polyak);
        Ok((critic_loss, actor_loss))
    }

    /// Actor loss `mean(α logπ(a|s) − min Q(s,a))` and its parameter gradient
    /// under fixed reparameterization noise.
    fn actor_loss_grad(&self, windows: &[&[f64]], xis: &[Vec<f64>]) -> (f64, Vec<f64>) {
        let n = self.action_dim;
        let inv_b = 1.0 / windows.len() as f64;
        let mut grad = self.actor.zeros_like_params();
        let mut scratch_q = vec![0.0; self.q1.num_params().max(self.q2.num_params())];
        let mut loss = 0.0;
        for (window, xi) in windows.iter().zip(xis.iter()) {
            let (out, cache) = self.actor.forward_cached(window, &[]);
            let (mu, log_std, raw_in_range) = self.head_split(&out);
            let u: Vec<f64> = (0..n).map(|j| mu[j] + log_std[j].exp() * xi[j]).collect();
            let action: Vec<f64> = u.iter().map(|v| self.a_max * v.tanh()).collect();
            let aux = SampleAux {
                log_std: log_std.clone(),
                xi: xi.clone(),
                u: u.clone(),
                action: action.clone(),
            };
            let lp = self.log_prob(&aux);

            let v1 = self.q1.forward_cached(window, &action);
            let v2 = self.q2.forward_cached(window, &action);
            let (q_min, critic, cache_q) = if v1.0[0] <= v2.0[0] {
                (v1.0[0], &self.q1, v1.1)
            } else {
                (v2.0[0], &self.q2, v2.1)
            };
            loss += (self.alpha * lp - q_min) * inv_b;

            // dQ/da through the chosen critic's action inputs.
            scratch_q.iter_mut().for_each(|g| *g = 0.0);
            let (_, dq_da) = critic.backward(
                &cache_q,
                &[1.0],
                &mut scratch_q[..critic.num_params()],
            );

            let mut grad_out = vec![0.0; 2 * n];
            for j in 0..n {
                let t = u[j].tanh();
                let c = self.a_max * (1.0 - t * t);
                let dlp_du = 2.0 * self.a_max * t * (1.0 - t * t) / (c + SQUASH_EPS);
                let sigma_xi = log_std[j].exp() * xi[j];
                let d_mu = self.alpha * dlp_du - dq_da[j] * c;
                let d_log_std =
                    self.alpha * (-1.0 + dlp_du * sigma_xi) - dq_da[j] * c * sigma_xi;
                grad_out[j] = d_mu * inv_b;
                grad_out[n + j] = if raw_in_range[j] {
                    d_log_std * inv_b
                } else {
                    0.0
                };
            }
            self.actor.backward(&cache, &grad_out, &mut grad);
        }
        (loss, grad)
    }

    pub fn target_params(&self) -> (&[f64], &[f64]) {
        (&self.q1_target.params, &self.q2_target.params)
    }

    pub fn set_target_params(&mut self, q1: &[f64], q2: &[f64]) {
        self.q1_target.params.copy_from_slice(q1);
        self.q2_target.params.copy_from_slice(q2);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_params() -> LearnerParams {
        let mut p = LearnerParams::default();
        p.feature_dim = 12;
        p.hidden_dim = 10;
        p.lr = 1e-2;
        p.entropy_alpha = 0.01;
        p.gamma = 0.0;
        p.polyak = 0.05;
        p
    }

    #[test]
    fn actions_respect_bounds() {
        let cfg = tiny_params();
        let learner = ContinuousActorCritic::new(3, 1, 2, 2.0, &cfg, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let w = [rng.gen_range(-1.0..1.0), 0.3, -0.7];
            let a = learner.sample_action(&w, &mut rng);
            assert!(a.iter().all(|v| v.abs() <= 2.0));
        }
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        let cfg = tiny_params();
        let mut learner = ContinuousActorCritic::new(4, 1, 2, 2.0, &cfg, 3);
        let windows_owned = [
            vec![0.2, -0.4, 0.9, 0.0],
            vec![-0.6, 0.1, 0.3, 0.5],
            vec![0.8, 0.8, -0.2, -0.9],
        ];
        let windows: Vec<&[f64]> = windows_owned.iter().map(|w| w.as_slice()).collect();
        let xis = vec![vec![0.3, -1.2], vec![0.0, 0.7], vec![-0.5, 0.2]];
        let (_, analytic) = learner.actor_loss_grad(&windows, &xis);
        let eps = 1e-6;
        let n = learner.actor.num_params();
        let stride = (n / 200).max(1);
        let mut idx = 0;
        while idx < n {
            let saved = learner.actor.params[idx];
            learner.actor.params[idx] = saved + eps;
            let (lp, _) = learner.actor_loss_grad(&windows, &xis);
            learner.actor.params[idx] = saved - eps;
            let (lm, _) = learner.actor_loss_grad(&windows, &xis);
            learner.actor.params[idx] = saved;
            let numeric = (lp - lm) / (2.0 * eps);
            let denom = analytic[idx].abs().max(numeric.abs()).max(1e-3);
            assert!(
                (analytic[idx] - numeric).abs() / denom < 1e-5,
                "param {idx}: analytic {} vs numeric {numeric}",
                analytic[idx]
            );
            idx += stride;
        }
    }

    #[test]
    fn bandit_policy_improvement() {
        // One-step problem: reward = -(a0 - 0.7)² - (a1 + 0.4)²; the actor
        // must move its mean toward (0.7, -0.4).
        let cfg = tiny_params();
        let mut learner = ContinuousActorCritic::new(2, 1, 2, 2.0, &cfg, 17);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let window = vec![0.5, -0.5];
        for _ in 0..3000 {
            let batch: Vec<ContinuousBatchItem> = (0..32)
                .map(|_| {
                    let a = learner.sample_action(&window, &mut rng);
                    let reward = -(a[0] - 0.7).powi(2) - (a[1] + 0.4).powi(2);
                    ContinuousBatchItem {
                        window: window.clone(),
                        next_window: window.clone(),
                        action: a,
                        reward,
                        mask: 0.0,
                    }
                })
                .collect();
            learner.update(&batch, &mut rng).unwrap();
        }
        let mean = learner.mean_action(&window);
        assert!(
            (mean[0] - 0.7).abs() < 0.25,
            "mean[0] = {} should approach 0.7",
            mean[0]
        );
        assert!(
            (mean[1] + 0.4).abs() < 0.25,
            "mean[1] = {} should approach -0.4",
            mean[1]
        );
    }

    #[test]
    fn deterministic_given_seeds() {
        let cfg = tiny_params();
        let run = || {
            let mut learner = ContinuousActorCritic::new(2, 1, 1, 2.0, &cfg, 5);
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            for _ in 0..10 {
                let batch: Vec<ContinuousBatchItem> = (0..8)
                    .map(|_| {
                        let a = learner.sample_action(&[0.1, 0.2], &mut rng);
                        ContinuousBatchItem {
                            window: vec![0.1, 0.2],
                            next_window: vec![0.1, 0.2],
                            action: a.clone(),
                            reward: -a[0] * a[0],
                            mask: 0.0,
                        }
                    })
                    .collect();
                learner.update(&batch, &mut rng).unwrap();
            }
            learner.actor.params
        };
        assert_eq!(run(), run());
    }
}
