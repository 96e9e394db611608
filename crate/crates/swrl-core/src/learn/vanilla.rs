//! Single-policy baseline: one actor-critic over the concatenated action
//! space (discrete force increment × continuous redundant acceleration),
//! trained on the summed reward. The actor carries a hybrid head: categorical
//! logits for the discrete part, a squashed Gaussian for the continuous part.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::LearnerParams;
use crate::error::{Error, Result};

use super::dqn::build_extractor;
use super::net::{Activation, MlpShape, WindowNet};
use super::optim::{polyak_update, SgdMomentum};
use super::sac::standard_normal;

const LOG_STD_MIN: f64 = -5.0;
const LOG_STD_MAX: f64 = 2.0;
const SQUASH_EPS: f64 = 1e-6;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone)]
pub struct HybridBatchItem {
    pub window: Vec<f64>,
    pub next_window: Vec<f64>,
    pub force_idx: usize,
    pub accel: Vec<f64>,
    /// Summed reward `r_K + r_R`.
    pub reward: f64,
    pub mask: f64,
}

#[derive(Debug, Clone)]
pub struct HybridSingleLearner {
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
    pub n_discrete: usize,
    pub action_dim: usize,
}

impl HybridSingleLearner {
    pub fn new(
        frame_dim: usize,
        window_len: usize,
        n_discrete: usize,
        action_dim: usize,
        a_max: f64,
        cfg: &LearnerParams,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor_head = MlpShape::new(
            vec![cfg.feature_dim, cfg.hidden_dim, n_discrete + 2 * action_dim],
            vec![Activation::Tanh, Activation::Linear],
        );
        let embed = n_discrete + action_dim;
        let critic_head = MlpShape::new(
            vec![cfg.feature_dim + embed, cfg.hidden_dim, 1],
            vec![Activation::Tanh, Activation::Linear],
        );
        let make_ext = || build_extractor(cfg.feature_mode, frame_dim, window_len, cfg.feature_dim);
        let mut actor = WindowNet::new(make_ext(), actor_head, 0, &mut rng);
        // Unsaturated heads at start: near-uniform logits, moderate spread.
        actor.scale_final_linear(0.05);
        let p = actor.params.len();
        for b in actor.params[p - action_dim..].iter_mut() {
            *b = -0.5;
        }
        let mut q1 = WindowNet::new(make_ext(), critic_head.clone(), embed, &mut rng);
        let mut q2 = WindowNet::new(make_ext(), critic_head, embed, &mut rng);
        for q in [&mut q1, &mut q2] {
            let p = q.params.len();
            q.params[p - 1] += cfg.q_init_bonus;
        }
        HybridSingleLearner {
            opt_actor: SgdMomentum::new(cfg.lr, cfg.momentum, actor.num_params()),
            opt_q1: SgdMomentum::new(cfg.lr, cfg.momentum, q1.num_params()),
            opt_q2: SgdMomentum::new(cfg.lr, cfg.momentum, q2.num_params()),
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            actor,
            q1,
            q2,
            gamma: cfg.gamma,
            polyak: cfg.polyak,
            alpha: cfg.entropy_alpha,
            a_max,
            n_discrete,
            action_dim,
        }
    }

    fn split_head(&self, out: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<bool>) {
        let k = self.n_discrete;
        let n = self.action_dim;
        let logits = out[..k].to_vec();
        let mu = out[k..k + n].to_vec();
        let mut log_std = Vec::with_capacity(n);
        let mut in_range = Vec::with_capacity(n);
        for raw in &out[k + n..k + 2 * n] {
            in_range.push(*raw > LOG_STD_MIN && *raw < LOG_STD_MAX);
            log_std.push(raw.clamp(LOG_STD_MIN, LOG_STD_MAX));
        }
        (logits, mu, log_std, in_range)
    }

    pub fn embed(&self, force_idx: usize, accel: &[f64]) -> Vec<f64> {
        let mut e = vec![0.0; self.n_discrete];
        e[force_idx] = 1.0;
        e.extend_from_slice(accel);
        e
    }

    /// Stochastic hybrid action for exploration.
    pub fn sample_action(&self, window: &[f64], rng: &mut ChaCha8Rng) -> (usize, Vec<f64>) {
        let out = self.actor.forward(window, &[]);
        let (logits, mu, log_std, _) = self.split_head(&out);
        let probs = softmax(&logits);
        let force_idx = sample_categorical(&probs, rng);
        let accel = (0..self.action_dim)
            .map(|j| self.a_max * (mu[j] + log_std[j].exp() * standard_normal(rng)).tanh())
            .collect();
        (force_idx, accel)
    }

    pub fn target_params(&self) -> (&[f64], &[f64]) {
        (&self.q1_target.params, &self.q2_target.params)
    }

    pub fn set_target_params(&mut self, q1: &[f64], q2: &[f64]) {
        self.q1_target.params.copy_from_slice(q1);
        self.q2_target.params.copy_from_slice(q2);
    }

    /// Deterministic hybrid action for evaluation.
    pub fn mean_action(&self, window: &[f64]) -> (usize, Vec<f64>) {
        let out = self.actor.forward(window, &[]);
        let (logits, mu, _, _) = self.split_head(&out);
        let force_idx = super::dqn::argmax(&logits);
        let accel = mu.iter().map(|m| self.a_max * m.tanh()).collect();
        (force_idx, accel)
    }

    fn min_q_target(&self, window: &[f64], embed: &[f64]) -> f64 {
        let a = self.q1_target.forward(window, embed)[0];
        let b = self.q2_target.forward(window, embed)[0];
        a.min(b)
    }

    fn min_q(&self, window: &[f64], embed: &[f64]) -> f64 {
        let a = self.q1.forward(window, embed)[0];
        let b = self.q2.forward(window, embed)[0];
        a.min(b)
    }

    /// One gradient step on the summed-reward TD objective plus the hybrid
    /// actor objective; returns (critic loss, actor loss).
    pub fn update(
        &mut self,
        batch: &[HybridBatchItem],
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, f64)> {
        if batch.is_empty() {
            return Ok((0.0, 0.0));
        }
        let inv_b = 1.0 / batch.len() as f64;
        let n = self.action_dim;

        // TD targets from the target critics with fresh policy samples.
        let mut targets = Vec::with_capacity(batch.len());
        for item in batch {
            let out = self.actor.forward(&item.next_window, &[]);
            let (logits, mu, log_std, _) = self.split_head(&out);
            let probs = softmax(&logits);
            let k = sample_categorical(&probs, rng);
            let mut log_pi = probs[k].max(1e-12).ln();
            let mut accel = Vec::with_capacity(n);
            for j in 0..n {
                let xi = standard_normal(rng);
                let u = mu[j] + log_std[j].exp() * xi;
                let t = u.tanh();
                accel.push(self.a_max * t);
                log_pi += -0.5 * xi * xi
                    - log_std[j]
                    - HALF_LN_2PI
                    - (self.a_max * (1.0 - t * t) + SQUASH_EPS).ln();
            }
            let e = self.embed(k, &accel);
            let v = self.min_q_target(&item.next_window, &e) - self.alpha * log_pi;
            targets.push(item.reward + self.gamma * item.mask * v);
        }

        let mut critic_loss = 0.0;
        for (critic, opt) in [
            (&mut self.q1, &mut self.opt_q1),
            (&mut self.q2, &mut self.opt_q2),
        ] {
            let mut grad = critic.zeros_like_params();
            for (item, y) in batch.iter().zip(targets.iter()) {
                let mut e = vec![0.0; self.n_discrete];
                e[item.force_idx] = 1.0;
                e.extend_from_slice(&item.accel);
                let (q, cache) = critic.forward_cached(&item.window, &e);
                let td = q[0] - y;
                critic_loss += 0.5 * td * td * inv_b;
                critic.backward(&cache, &[2.0 * td * inv_b], &mut grad);
            }
            opt.step(&mut critic.params, &grad);
        }
        if !critic_loss.is_finite() {
            return Err(Error::Diverged(format!("hybrid critic loss {critic_loss}")));
        }

        // Actor: exact expectation over the discrete head, reparameterized
        // gradient through the continuous head at a sampled discrete action.
        let mut actor_grad = self.actor.zeros_like_params();
        let mut actor_loss = 0.0;
        let mut scratch = vec![0.0; self.q1.num_params().max(self.q2.num_params())];
        for item in batch {
            let (out, cache) = self.actor.forward_cached(&item.window, &[]);
            let (logits, mu, log_std, in_range) = self.split_head(&out);
            let probs = softmax(&logits);

            let xi: Vec<f64> = (0..n).map(|_| standard_normal(rng)).collect();
            let u: Vec<f64> = (0..n).map(|j| mu[j] + log_std[j].exp() * xi[j]).collect();
            let accel: Vec<f64> = u.iter().map(|v| self.a_max * v.tanh()).collect();
            let mut log_pi_cont = 0.0;
            for j in 0..n {
                let t = u[j].tanh();
                log_pi_cont += -0.5 * xi[j] * xi[j]
                    - log_std[j]
                    - HALF_LN_2PI
                    - (self.a_max * (1.0 - t * t) + SQUASH_EPS).ln();
            }

            // Q of every discrete option at the sampled continuous action.
            let mut q_opts = Vec::with_capacity(self.n_discrete);
            for k in 0..self.n_discrete {
                let e = self.embed(k, &accel);
                q_opts.push(self.min_q(&item.window, &e));
            }

            // Discrete part: L_K = Σ_k π_k (α log π_k − Q_k).
            let g: Vec<f64> = (0..self.n_discrete)
                .map(|k| self.alpha * (probs[k].max(1e-12).ln() + 1.0) - q_opts[k])
                .collect();
            let g_mean: f64 = (0..self.n_discrete).map(|k| probs[k] * g[k]).sum();
            let l_k: f64 = (0..self.n_discrete)
                .map(|k| probs[k] * (self.alpha * probs[k].max(1e-12).ln() - q_opts[k]))
                .sum();

            // Continuous part at a sampled discrete option.
            let k_s = sample_categorical(&probs, rng);
            let e_s = self.embed(k_s, &accel);
            let v1 = self.q1.forward_cached(&item.window, &e_s);
            let v2 = self.q2.forward_cached(&item.window, &e_s);
            let (critic, cache_q, q_min) = if v1.0[0] <= v2.0[0] {
                (&self.q1, v1.1, v1.0[0])
            } else {
                (&self.q2, v2.1, v2.0[0])
            };
            scratch.iter_mut().for_each(|v| *v = 0.0);
            let (_, dq_de) =
                critic.backward(&cache_q, &[1.0], &mut scratch[..critic.num_params()]);
            let dq_da = &dq_de[self.n_discrete..];

            actor_loss += (l_k + self.alpha * log_pi_cont - q_min) * inv_b;

            let mut grad_out = vec![0.0; self.n_discrete + 2 * n];
            for m in 0..self.n_discrete {
                grad_out[m] = probs[m] * (g[m] - g_mean) * inv_b;
            }
            for j in 0..n {
                let t = u[j].tanh();
                let c = self.a_max * (1.0 - t * t);
                let dlp_du = 2.0 * self.a_max * t * (1.0 - t * t) / (c + SQUASH_EPS);
                let sigma_xi = log_std[j].exp() * xi[j];
                grad_out[self.n_discrete + j] = (self.alpha * dlp_du - dq_da[j] * c) * inv_b;
                grad_out[self.n_discrete + n + j] = if in_range[j] {
                    (self.alpha * (-1.0 + dlp_du * sigma_xi) - dq_da[j] * c * sigma_xi) * inv_b
                } else {
                    0.0
                };
            }
            self.actor.backward(&cache, &grad_out, &mut actor_grad);
        }
        if !actor_loss.is_finite() {
            return Err(Error::Diverged(format!("hybrid actor loss {actor_loss}")));
        }
        self.opt_actor.step(&mut self.actor.params, &actor_grad);

        polyak_update(&mut self.q1_target.params, &self.q1.params, self.polyak);
        polyak_update(&mut self.q2_target.params, &self.q2.params, self.polyak);
        Ok((critic_loss, actor_loss))
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

pub fn sample_categorical(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let draw: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if draw < acc {
            return i;
        }
    }
    probs.len() - 1
}
