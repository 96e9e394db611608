//! Stochastic gradient descent with classical momentum.

#[derive(Debug, Clone)]
pub struct SgdMomentum {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<f64>,
}

impl SgdMomentum {
    pub fn new(lr: f64, momentum: f64, num_params: usize) -> Self {
        SgdMomentum {
            lr,
            momentum,
            velocity: vec![0.0; num_params],
        }
    }

    /// One update step: `v <- μ v - lr g`, `p <- p + v`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), grad.len());
        debug_assert_eq!(params.len(), self.velocity.len());
        for i in 0..params.len() {
            self.velocity[i] = self.momentum * self.velocity[i] - self.lr * grad[i];
            params[i] += self.velocity[i];
        }
    }
}

/// Polyak averaging of target-network parameters:
/// `target <- (1 - τ) target + τ online`.
pub fn polyak_update(target: &mut [f64], online: &[f64], tau: f64) {
    debug_assert_eq!(target.len(), online.len());
    for i in 0..target.len() {
        target[i] = (1.0 - tau) * target[i] + tau * online[i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_descends_a_quadratic() {
        // f(p) = ½‖p‖², gradient p.
        let mut params = vec![1.0, -2.0, 0.5];
        let mut opt = SgdMomentum::new(0.1, 0.9, 3);
        for _ in 0..200 {
            let grad = params.clone();
            opt.step(&mut params, &grad);
        }
        assert!(params.iter().all(|p| p.abs() < 1e-3), "{params:?}");
    }

    #[test]
    fn zero_gradient_keeps_params_without_momentum() {
        let mut params = vec![2.0, 3.0];
        let mut opt = SgdMomentum::new(0.1, 0.0, 2);
        opt.step(&mut params, &[0.0, 0.0]);
        assert_eq!(params, vec![2.0, 3.0]);
    }

    #[test]
    fn polyak_moves_toward_online() {
        let mut target = vec![0.0, 0.0];
        polyak_update(&mut target, &[1.0, -1.0], 0.25);
        assert_eq!(target, vec![0.25, -0.25]);
    }
}
