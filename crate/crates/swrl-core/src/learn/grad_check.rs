//! Analytic-vs-numeric gradient verification for the approximators.

use super::net::WindowNet;

/// Squared-error loss and its output gradient.
pub fn squared_loss(out: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let loss = out
        .iter()
        .zip(target.iter())
        .map(|(o, t)| 0.5 * (o - t) * (o - t))
        .sum();
    let grad = out.iter().zip(target.iter()).map(|(o, t)| o - t).collect();
    (loss, grad)
}

/// Maximum relative error between the analytic parameter gradient of a
/// squared loss and central finite differences at step `eps`.
///
/// Large nets are subsampled with a deterministic stride; the denominator is
/// floored so that exact-zero gradients compare by absolute error.
pub fn gradient_check(
    net: &mut WindowNet,
    window: &[f64],
    extra: &[f64],
    target: &[f64],
    eps: f64,
) -> f64 {
    let (out, cache) = net.forward_cached(window, extra);
    let (_, grad_out) = squared_loss(&out, target);
    let mut analytic = net.zeros_like_params();
    net.backward(&cache, &grad_out, &mut analytic);

    let n = net.num_params();
    let max_checked = 1_500.min(n);
    let stride = (n / max_checked).max(1);

    let mut worst = 0.0_f64;
    let mut idx = 0;
    while idx < n {
        let saved = net.params[idx];
        net.params[idx] = saved + eps;
        let (out_p, _) = net.forward_cached(window, extra);
        let (loss_p, _) = squared_loss(&out_p, target);
        net.params[idx] = saved - eps;
        let (out_m, _) = net.forward_cached(window, extra);
        let (loss_m, _) = squared_loss(&out_m, target);
        net.params[idx] = saved;
        let numeric = (loss_p - loss_m) / (2.0 * eps);
        let denom = analytic[idx].abs().max(numeric.abs()).max(1e-3);
        worst = worst.max((analytic[idx] - numeric).abs() / denom);
        idx += stride;
    }
    worst
}
