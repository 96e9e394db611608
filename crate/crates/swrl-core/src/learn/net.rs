//! Small differentiable function approximators with hand-rolled backprop.
//!
//! Every network stores its parameters in one flat `Vec<f64>` so the
//! optimizer, checkpoints, and the finite-difference gradient checker can
//! treat models uniformly. A `WindowNet` is a feature extractor over the
//! flattened observation window (identity, two-layer net, or a minimal
//! recurrent unit) followed by a head that may take extra inputs such as an
//! action embedding.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Tanh,
    Relu,
}

impl Activation {
    fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Linear => z,
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the post-activation value.
    fn derivative(&self, y: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Fully connected stack shape; parameters live elsewhere.
#[derive(Debug, Clone)]
pub struct MlpShape {
    pub sizes: Vec<usize>,
    pub acts: Vec<Activation>,
}

impl MlpShape {
    pub fn new(sizes: Vec<usize>, acts: Vec<Activation>) -> Self {
        assert_eq!(sizes.len(), acts.len() + 1, "one activation per layer");
        MlpShape { sizes, acts }
    }

    pub fn num_params(&self) -> usize {
        (0..self.acts.len())
            .map(|l| self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1])
            .sum()
    }

    pub fn in_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    fn init(&self, params: &mut [f64], rng: &mut ChaCha8Rng) {
        let mut off = 0;
        for l in 0..self.acts.len() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let scale = (6.0 / (n_in + n_out) as f64).sqrt();
            for w in params[off..off + n_in * n_out].iter_mut() {
                *w = rng.gen_range(-scale..scale);
            }
            off += n_in * n_out;
            for b in params[off..off + n_out].iter_mut() {
                *b = 0.0;
            }
            off += n_out;
        }
    }

    pub fn forward(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        self.forward_cached(params, x).0
    }

    /// Forward pass caching the post-activation of every layer (input first).
    pub fn forward_cached(&self, params: &[f64], x: &[f64]) -> (Vec<f64>, MlpCache) {
        debug_assert_eq!(x.len(), self.in_dim());
        let mut layers = Vec::with_capacity(self.acts.len() + 1);
        layers.push(x.to_vec());
        let mut off = 0;
        for l in 0..self.acts.len() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &params[off..off + n_in * n_out];
            off += n_in * n_out;
            let b = &params[off..off + n_out];
            off += n_out;
            let x_l = &layers[l];
            let mut y = Vec::with_capacity(n_out);
            for i in 0..n_out {
                let row = &w[i * n_in..(i + 1) * n_in];
                let z = b[i]
                    + row
                        .iter()
                        .zip(x_l.iter())
                        .map(|(wv, xv)| wv * xv)
                        .sum::<f64>();
                y.push(self.acts[l].apply(z));
            }
            layers.push(y);
        }
        let out = layers.last().unwrap().clone();
        (out, MlpCache { layers })
    }

    /// Backward pass. Accumulates parameter gradients into `param_grad`
    /// (same layout as `params`) and returns the gradient at the input.
    pub fn backward(
        &self,
        params: &[f64],
        cache: &MlpCache,
        grad_out: &[f64],
        param_grad: &mut [f64],
    ) -> Vec<f64> {
        let mut g = grad_out.to_vec();
        // Walk layers in reverse; recompute parameter offsets per layer.
        for l in (0..self.acts.len()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off: usize = (0..l)
                .map(|k| self.sizes[k] * self.sizes[k + 1] + self.sizes[k + 1])
                .sum();
            let w = &params[off..off + n_in * n_out];
            let y = &cache.layers[l + 1];
            let x_l = &cache.layers[l];
            let mut dz = vec![0.0; n_out];
            for i in 0..n_out {
                dz[i] = g[i] * self.acts[l].derivative(y[i]);
            }
            {
                let (dw, rest) = param_grad[off..off + n_in * n_out + n_out]
                    .split_at_mut(n_in * n_out);
                for i in 0..n_out {
                    let dzi = dz[i];
                    let row = &mut dw[i * n_in..(i + 1) * n_in];
                    row.iter_mut()
                        .zip(x_l.iter())
                        .for_each(|(gw, xv)| *gw += dzi * xv);
                    rest[i] += dzi;
                }
            }
            let mut g_prev = vec![0.0; n_in];
            for i in 0..n_out {
                let dzi = dz[i];
                let row = &w[i * n_in..(i + 1) * n_in];
                g_prev
                    .iter_mut()
                    .zip(row.iter())
                    .for_each(|(gp, wv)| *gp += wv * dzi);
            }
            g = g_prev;
        }
        g
    }
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Post-activation of every layer; `layers[0]` is the input.
    layers: Vec<Vec<f64>>,
}

/// Feature extractor over the observation window.
#[derive(Debug, Clone)]
pub enum ExtractorShape {
    /// Pass the flattened window through unchanged.
    Identity { dim: usize },
    /// Flattened window through a fully connected stack.
    Flat(MlpShape),
    /// Minimal recurrent unit over the window frames:
    /// `h_t = tanh(Wx x_t + Wh h_{t-1} + b)`, feature = `h_T`.
    Recurrent {
        input_dim: usize,
        hidden: usize,
        steps: usize,
    },
}

impl ExtractorShape {
    pub fn num_params(&self) -> usize {
        match self {
            ExtractorShape::Identity { .. } => 0,
            ExtractorShape::Flat(m) => m.num_params(),
            ExtractorShape::Recurrent {
                input_dim, hidden, ..
            } => hidden * input_dim + hidden * hidden + hidden,
        }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            ExtractorShape::Identity { dim } => *dim,
            ExtractorShape::Flat(m) => m.in_dim(),
            ExtractorShape::Recurrent {
                input_dim, steps, ..
            } => input_dim * steps,
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            ExtractorShape::Identity { dim } => *dim,
            ExtractorShape::Flat(m) => m.out_dim(),
            ExtractorShape::Recurrent { hidden, .. } => *hidden,
        }
    }

    fn init(&self, params: &mut [f64], rng: &mut ChaCha8Rng) {
        match self {
            ExtractorShape::Identity { .. } => {}
            ExtractorShape::Flat(m) => m.init(params, rng),
            ExtractorShape::Recurrent {
                input_dim, hidden, ..
            } => {
                let sx = (6.0 / (input_dim + hidden) as f64).sqrt();
                let sh = (1.0 / *hidden as f64).sqrt();
                let n_wx = hidden * input_dim;
                let n_wh = hidden * hidden;
                for w in params[..n_wx].iter_mut() {
                    *w = rng.gen_range(-sx..sx);
                }
                for w in params[n_wx..n_wx + n_wh].iter_mut() {
                    *w = rng.gen_range(-sh..sh);
                }
                for b in params[n_wx + n_wh..].iter_mut() {
                    *b = 0.0;
                }
            }
        }
    }

    fn forward_cached(&self, params: &[f64], window: &[f64]) -> (Vec<f64>, ExtractorCache) {
        match self {
            ExtractorShape::Identity { .. } => (window.to_vec(), ExtractorCache::Identity),
            ExtractorShape::Flat(m) => {
                let (out, cache) = m.forward_cached(params, window);
                (out, ExtractorCache::Flat(cache))
            }
            ExtractorShape::Recurrent {
                input_dim,
                hidden,
                steps,
            } => {
                debug_assert_eq!(window.len(), input_dim * steps);
                let (h, n) = (*hidden, *input_dim);
                let wx = &params[..h * n];
                let wh = &params[h * n..h * n + h * h];
                let b = &params[h * n + h * h..];
                let mut states = Vec::with_capacity(*steps + 1);
                states.push(vec![0.0; h]);
                for t in 0..*steps {
                    let x_t = &window[t * n..(t + 1) * n];
                    let prev = &states[t];
                    let mut h_t = Vec::with_capacity(h);
                    for i in 0..h {
                        let row_x = &wx[i * n..(i + 1) * n];
                        let row_h = &wh[i * h..(i + 1) * h];
                        let z = b[i]
                            + row_x
                                .iter()
                                .zip(x_t.iter())
                                .map(|(wv, xv)| wv * xv)
                                .sum::<f64>()
                            + row_h
                                .iter()
                                .zip(prev.iter())
                                .map(|(wv, hv)| wv * hv)
                                .sum::<f64>();
                        h_t.push(z.tanh());
                    }
                    states.push(h_t);
                }
                let out = states.last().unwrap().clone();
                (out, ExtractorCache::Recurrent { states })
            }
        }
    }

    fn backward(
        &self,
        params: &[f64],
        window: &[f64],
        cache: &ExtractorCache,
        grad_out: &[f64],
        param_grad: &mut [f64],
    ) -> Vec<f64> {
        match (self, cache) {
            (ExtractorShape::Identity { .. }, _) => grad_out.to_vec(),
            (ExtractorShape::Flat(m), ExtractorCache::Flat(c)) => {
                m.backward(params, c, grad_out, param_grad)
            }
            (
                ExtractorShape::Recurrent {
                    input_dim,
                    hidden,
                    steps,
                },
                ExtractorCache::Recurrent { states },
            ) => {
                let (h, n) = (*hidden, *input_dim);
                let wx = &params[..h * n];
                let wh = &params[h * n..h * n + h * h];
                let (g_wx, rest) = param_grad[..h * n + h * h + h].split_at_mut(h * n);
                let (g_wh, g_b) = rest.split_at_mut(h * h);
                let mut g_window = vec![0.0; window.len()];
                let mut g = grad_out.to_vec();
                for t in (0..*steps).rev() {
                    let h_t = &states[t + 1];
                    let prev = &states[t];
                    let x_t = &window[t * n..(t + 1) * n];
                    let mut dz = vec![0.0; h];
                    for i in 0..h {
                        dz[i] = g[i] * (1.0 - h_t[i] * h_t[i]);
                    }
                    for i in 0..h {
                        let row = &mut g_wx[i * n..(i + 1) * n];
                        for j in 0..n {
                            row[j] += dz[i] * x_t[j];
                        }
                        let row_h = &mut g_wh[i * h..(i + 1) * h];
                        for j in 0..h {
                            row_h[j] += dz[i] * prev[j];
                        }
                        g_b[i] += dz[i];
                    }
                    let gx = &mut g_window[t * n..(t + 1) * n];
                    for i in 0..h {
                        let row = &wx[i * n..(i + 1) * n];
                        for j in 0..n {
                            gx[j] += row[j] * dz[i];
                        }
                    }
                    let mut g_prev = vec![0.0; h];
                    for i in 0..h {
                        let row = &wh[i * h..(i + 1) * h];
                        for j in 0..h {
                            g_prev[j] += row[j] * dz[i];
                        }
                    }
                    g = g_prev;
                }
                g_window
            }
            _ => unreachable!("cache kind matches extractor kind"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum ExtractorCache {
    Identity,
    Flat(MlpCache),
    Recurrent { states: Vec<Vec<f64>> },
}

/// Extractor plus head with optional extra inputs (action embeddings).
#[derive(Debug, Clone)]
pub struct WindowNet {
    pub extractor: ExtractorShape,
    pub head: MlpShape,
    pub extra_dim: usize,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct NetCache {
    extractor: ExtractorCache,
    head: MlpCache,
    window: Vec<f64>,
}

impl WindowNet {
    pub fn new(
        extractor: ExtractorShape,
        head: MlpShape,
        extra_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert_eq!(
            head.in_dim(),
            extractor.out_dim() + extra_dim,
            "head input must be feature + extra"
        );
        let n = extractor.num_params() + head.num_params();
        let mut params = vec![0.0; n];
        let split = extractor.num_params();
        extractor.init(&mut params[..split], rng);
        head.init(&mut params[split..], rng);
        WindowNet {
            extractor,
            head,
            extra_dim,
            params,
        }
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn out_dim(&self) -> usize {
        self.head.out_dim()
    }

    pub fn forward(&self, window: &[f64], extra: &[f64]) -> Vec<f64> {
        self.forward_cached(window, extra).0
    }

    pub fn forward_cached(&self, window: &[f64], extra: &[f64]) -> (Vec<f64>, NetCache) {
        debug_assert_eq!(extra.len(), self.extra_dim);
        let split = self.extractor.num_params();
        let (feat, e_cache) = self.extractor.forward_cached(&self.params[..split], window);
        let mut head_in = feat;
        head_in.extend_from_slice(extra);
        let (out, h_cache) = self.head.forward_cached(&self.params[split..], &head_in);
        (
            out,
            NetCache {
                extractor: e_cache,
                head: h_cache,
                window: window.to_vec(),
            },
        )
    }

    /// Accumulate parameter gradients; returns (window grad, extra grad).
    pub fn backward(
        &self,
        cache: &NetCache,
        grad_out: &[f64],
        param_grad: &mut [f64],
    ) -> (Vec<f64>, Vec<f64>) {
        debug_assert_eq!(param_grad.len(), self.params.len());
        let split = self.extractor.num_params();
        let (p_ext, p_head) = self.params.split_at(split);
        let (g_ext, g_head) = param_grad.split_at_mut(split);
        let g_head_in = self
            .head
            .backward(p_head, &cache.head, grad_out, g_head);
        let feat_dim = self.extractor.out_dim();
        let g_feat = &g_head_in[..feat_dim];
        let g_extra = g_head_in[feat_dim..].to_vec();
        let g_window =
            self.extractor
                .backward(p_ext, &cache.window, &cache.extractor, g_feat, g_ext);
        (g_window, g_extra)
    }

    pub fn zeros_like_params(&self) -> Vec<f64> {
        vec![0.0; self.params.len()]
    }

    /// Shrink the final linear layer's weights so outputs start near zero.
    /// Keeps policy heads out of tanh saturation at initialization.
    pub fn scale_final_linear(&mut self, factor: f64) {
        let layers = self.head.acts.len();
        let (n_in, n_out) = (self.head.sizes[layers - 1], self.head.sizes[layers]);
        let head_off = self.extractor.num_params();
        let last_w_off: usize = head_off
            + (0..layers - 1)
                .map(|k| self.head.sizes[k] * self.head.sizes[k + 1] + self.head.sizes[k + 1])
                .sum::<usize>();
        for w in self.params[last_w_off..last_w_off + n_in * n_out].iter_mut() {
            *w *= factor;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn mlp_forward_known_values() {
        let shape = MlpShape::new(vec![2, 1], vec![Activation::Linear]);
        let params = vec![0.5, -1.0, 0.25]; // w = [0.5, -1], b = 0.25
        let out = shape.forward(&params, &[2.0, 3.0]);
        assert_eq!(out.len(), 1);
        assert!((out[0] - (0.5 * 2.0 - 1.0 * 3.0 + 0.25)).abs() < 1e-15);
    }

    #[test]
    fn relu_blocks_negative_gradient() {
        let shape = MlpShape::new(vec![1, 1], vec![Activation::Relu]);
        let params = vec![1.0, -2.0]; // z = x - 2
        let (out, cache) = shape.forward_cached(&params, &[1.0]);
        assert_eq!(out[0], 0.0);
        let mut pg = vec![0.0; 2];
        let gin = shape.backward(&params, &cache, &[1.0], &mut pg);
        assert_eq!(gin[0], 0.0);
        assert_eq!(pg, vec![0.0, 0.0]);
    }

    #[test]
    fn deterministic_and_finite_init() {
        let shape = ExtractorShape::Flat(MlpShape::new(
            vec![20, 16, 8],
            vec![Activation::Tanh, Activation::Tanh],
        ));
        let head = MlpShape::new(vec![10, 4], vec![Activation::Linear]);
        let a = WindowNet::new(shape.clone(), head.clone(), 2, &mut rng(5));
        let b = WindowNet::new(shape, head, 2, &mut rng(5));
        assert_eq!(a.params, b.params);
        let x: Vec<f64> = (0..20).map(|i| (i as f64) * 0.1 - 1.0).collect();
        let out = a.forward(&x, &[0.3, -0.2]);
        assert!(out.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn recurrent_extractor_uses_history() {
        let ext = ExtractorShape::Recurrent {
            input_dim: 3,
            hidden: 5,
            steps: 4,
        };
        let head = MlpShape::new(vec![5, 2], vec![Activation::Linear]);
        let net = WindowNet::new(ext, head, 0, &mut rng(7));
        let mut w1 = vec![0.1; 12];
        let w2 = w1.clone();
        let y1 = net.forward(&w1, &[]);
        // Change only the first (oldest) frame: a real recurrence must react.
        w1[0] = 2.0;
        let y1b = net.forward(&w1, &[]);
        assert!(
            (y1[0] - y1b[0]).abs() > 1e-9,
            "oldest frame must influence features"
        );
        let y2 = net.forward(&w2, &[]);
        assert_eq!(y1[0], y2[0] + (y1[0] - y2[0]));
    }
}
