//! Behavior cloning from manual-baseline trajectories: cross-entropy on the
//! discrete force increment, squared error on the redundant acceleration.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::LearnerParams;
use crate::error::{Error, Result};

use super::dqn::{argmax, build_extractor};
use super::net::{Activation, MlpShape, WindowNet};
use super::optim::SgdMomentum;
use super::vanilla::softmax;

#[derive(Debug, Clone)]
pub struct BcExample {
    pub window: Vec<f64>,
    pub force_idx: usize,
    pub accel: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BcPolicy {
    pub net: WindowNet,
    pub n_discrete: usize,
    pub action_dim: usize,
    pub a_max: f64,
}

impl BcPolicy {
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
        let extractor = build_extractor(cfg.feature_mode, frame_dim, window_len, cfg.feature_dim);
        let head = MlpShape::new(
            vec![cfg.feature_dim, cfg.hidden_dim, n_discrete + action_dim],
            vec![Activation::Tanh, Activation::Linear],
        );
        BcPolicy {
            net: WindowNet::new(extractor, head, 0, &mut rng),
            n_discrete,
            action_dim,
            a_max,
        }
    }

    pub fn act(&self, window: &[f64]) -> (usize, Vec<f64>) {
        let out = self.net.forward(window, &[]);
        let force_idx = argmax(&out[..self.n_discrete]);
        let accel = out[self.n_discrete..]
            .iter()
            .map(|v| v.clamp(-self.a_max, self.a_max))
            .collect();
        (force_idx, accel)
    }

    /// Cross-entropy plus squared-error loss and its output gradient for one
    /// example.
    fn loss_grad(&self, out: &[f64], example: &BcExample) -> (f64, Vec<f64>) {
        let probs = softmax(&out[..self.n_discrete]);
        let mut loss = -probs[example.force_idx].max(1e-12).ln();
        let mut grad = vec![0.0; out.len()];
        for k in 0..self.n_discrete {
            grad[k] = probs[k] - if k == example.force_idx { 1.0 } else { 0.0 };
        }
        for j in 0..self.action_dim {
            let d = out[self.n_discrete + j] - example.accel[j];
            loss += 0.5 * d * d;
            grad[self.n_discrete + j] = d;
        }
        (loss, grad)
    }
}

#[derive(Debug, Clone)]
pub struct BcReport {
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Held-out discrete-action accuracy.
    pub holdout_accuracy: f64,
    /// Held-out squared error of the continuous head.
    pub holdout_mse: f64,
}

/// Supervised training over a dataset of manual trajectories. A deterministic
/// tail split (10%, at least one example) is held out for reporting.
pub fn train_bc(
    policy: &mut BcPolicy,
    dataset: &[BcExample],
    cfg: &LearnerParams,
    seed: u64,
) -> Result<BcReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("behavior cloning".into()));
    }
    let holdout_len = (dataset.len() / 10).max(1).min(dataset.len() - 1).max(1);
    let split = dataset.len() - holdout_len;
    let (train, holdout) = if dataset.len() == 1 {
        (dataset, dataset)
    } else {
        dataset.split_at(split)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut opt = SgdMomentum::new(cfg.bc_lr, cfg.momentum, policy.net.num_params());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let batch = cfg.batch_size.min(train.len()).max(1);
    let mut epoch_losses = Vec::with_capacity(cfg.bc_epochs);
    for _ in 0..cfg.bc_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let inv = 1.0 / chunk.len() as f64;
            let mut grad = policy.net.zeros_like_params();
            for &i in chunk {
                let ex = &train[i];
                let (out, cache) = policy.net.forward_cached(&ex.window, &[]);
                let (loss, mut gout) = policy.loss_grad(&out, ex);
                epoch_loss += loss;
                for g in gout.iter_mut() {
                    *g *= inv;
                }
                policy.net.backward(&cache, &gout, &mut grad);
            }
            opt.step(&mut policy.net.params, &grad);
        }
        let mean = epoch_loss / train.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged(format!("behavior cloning loss {mean}")));
        }
        epoch_losses.push(mean);
    }

    let mut correct = 0usize;
    let mut mse = 0.0;
    for ex in holdout {
        let (k, a) = policy.act(&ex.window);
        if k == ex.force_idx {
            correct += 1;
        }
        mse += a
            .iter()
            .zip(ex.accel.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>();
    }
    Ok(BcReport {
        epoch_losses,
        holdout_accuracy: correct as f64 / holdout.len() as f64,
        holdout_mse: mse / holdout.len() as f64,
    })
}
