//! Discrete-action learner for the force-increment policy: double Q-learning
//! with a Polyak-averaged target network.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::config::{FeatureMode, LearnerParams};
use crate::error::{Error, Result};

use super::net::{Activation, ExtractorShape, MlpShape, WindowNet};
use super::optim::{polyak_update, SgdMomentum};

/// One prepared (scaled) batch entry.
#[derive(Debug, Clone)]
pub struct DiscreteBatchItem {
    pub window: Vec<f64>,
    pub next_window: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    /// 1 to bootstrap from the next state, 0 on true terminals.
    pub mask: f64,
}

#[derive(Debug, Clone)]
pub struct DiscreteQLearner {
    pub online: WindowNet,
    pub target: WindowNet,
    opt: SgdMomentum,
    pub gamma: f64,
    polyak: f64,
    pub n_actions: usize,
}

pub fn build_extractor(
    mode: FeatureMode,
    frame_dim: usize,
    window_len: usize,
    feature_dim: usize,
) -> ExtractorShape {
    match mode {
        FeatureMode::FlattenedWindow => ExtractorShape::Flat(MlpShape::new(
            vec![frame_dim * window_len, feature_dim, feature_dim],
            vec![Activation::Tanh, Activation::Tanh],
        )),
        FeatureMode::Recurrent => ExtractorShape::Recurrent {
            input_dim: frame_dim,
            hidden: feature_dim,
            steps: window_len,
        },
    }
}

impl DiscreteQLearner {
    pub fn new(
        frame_dim: usize,
        window_len: usize,
        n_actions: usize,
        cfg: &LearnerParams,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let extractor = build_extractor(cfg.feature_mode, frame_dim, window_len, cfg.feature_dim);
        let head = MlpShape::new(
            vec![cfg.feature_dim, cfg.hidden_dim, n_actions],
            vec![Activation::Tanh, Activation::Linear],
        );
        let mut online = WindowNet::new(extractor, head, 0, &mut rng);
        online.scale_final_linear(0.1);
        let p = online.params.len();
        for b in online.params[p - n_actions..].iter_mut() {
            *b += cfg.q_init_bonus;
        }
        let target = online.clone();
        let opt = SgdMomentum::new(cfg.lr, cfg.momentum, online.num_params());
        DiscreteQLearner {
            online,
            target,
            opt,
            gamma: cfg.effective_gamma_force(),
            polyak: cfg.polyak,
            n_actions,
        }
    }

    pub fn q_values(&self, window: &[f64]) -> Vec<f64> {
        self.online.forward(window, &[])
    }

    pub fn act_greedy(&self, window: &[f64]) -> usize {
        argmax(&self.q_values(window))
    }

    pub fn act_epsilon(&self, window: &[f64], epsilon: f64, rng: &mut ChaCha8Rng) -> usize {
        if rng.gen::<f64>() < epsilon {
            rng.gen_range(0..self.n_actions)
        } else {
            self.act_greedy(window)
        }
    }

    /// One gradient step on a batch; returns the mean TD loss.
    pub fn update(&mut self, batch: &[DiscreteBatchItem]) -> Result<f64> {
        if batch.is_empty() {
            return Ok(0.0);
        }
        let inv_b = 1.0 / batch.len() as f64;
        let mut grad = self.online.zeros_like_params();
        let mut loss = 0.0;
        for item in batch {
            // Double Q: online picks the action, target evaluates it.
            let q_next_online = self.online.forward(&item.next_window, &[]);
            let a_star = argmax(&q_next_online);
            let q_next = self.target.forward(&item.next_window, &[])[a_star];
            let y = item.reward + self.gamma * item.mask * q_next;

            let (q, cache) = self.online.forward_cached(&item.window, &[]);
            let td = q[item.action] - y;
            loss += td * td * inv_b;
            let mut grad_out = vec![0.0; self.n_actions];
            grad_out[item.action] = 2.0 * td * inv_b;
            self.online.backward(&cache, &grad_out, &mut grad);
        }
        if !loss.is_finite() {
            return Err(Error::Diverged(format!("discrete TD loss {loss}")));
        }
        self.opt.step(&mut self.online.params, &grad);
        polyak_update(&mut self.target.params, &self.online.params, self.polyak);
        Ok(loss)
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> LearnerParams {
        let mut p = LearnerParams::default();
        p.feature_dim = 16;
        p.hidden_dim = 12;
        p.lr = 5e-2;
        p.gamma = 0.0;
        p
    }

    #[test]
    fn learns_a_contextual_bandit() {
        // gamma = 0: plain regression of rewards; reward 1 only when the
        // action matches the sign of the first observation component.
        let cfg = params();
        let mut learner = DiscreteQLearner::new(2, 1, 2, &cfg, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..600 {
            let batch: Vec<DiscreteBatchItem> = (0..16)
                .map(|_| {
                    let x = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                    let a = rng.gen_range(0..2);
                    let good = (x > 0.0) == (a == 1);
                    DiscreteBatchItem {
                        window: vec![x, 0.0],
                        next_window: vec![x, 0.0],
                        action: a,
                        reward: if good { 1.0 } else { 0.0 },
                        mask: 0.0,
                    }
                })
                .collect();
            learner.update(&batch).unwrap();
        }
        assert_eq!(learner.act_greedy(&[1.0, 0.0]), 1);
        assert_eq!(learner.act_greedy(&[-1.0, 0.0]), 0);
    }

    #[test]
    fn epsilon_one_uniform_and_zero_greedy() {
        let cfg = params();
        let learner = DiscreteQLearner::new(2, 1, 4, &cfg, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut seen = [false; 4];
        for _ in 0..100 {
            seen[learner.act_epsilon(&[0.1, 0.2], 1.0, &mut rng)] = true;
        }
        assert!(seen.iter().all(|s| *s));
        let greedy = learner.act_greedy(&[0.1, 0.2]);
        for _ in 0..10 {
            assert_eq!(learner.act_epsilon(&[0.1, 0.2], 0.0, &mut rng), greedy);
        }
    }

    #[test]
    fn zero_updates_leave_initialization() {
        let cfg = params();
        let a = DiscreteQLearner::new(4, 2, 4, &cfg, 5);
        let b = DiscreteQLearner::new(4, 2, 4, &cfg, 5);
        assert_eq!(a.online.params, b.online.params);
        assert_eq!(a.target.params, a.online.params);
    }
}
