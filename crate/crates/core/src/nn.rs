//! Minimal feed-forward function approximator with exact reverse-mode
//! gradients, an adaptive-moment optimizer, target-network soft updates
//! and the squashed-Gaussian sampling head used by the actor. Double
//! precision throughout.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bounds on the actor's log standard deviation outputs.
pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Numerical guard inside the tanh-squash log-density correction.
pub const SQUASH_EPS: f64 = 1e-6;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid layer sizes: {0}")]
    InvalidSizes(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cache does not match network (stale or from another net)")]
    StaleCache,
}

/// One dense layer, weights row-major `[rows x cols]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    fn zeros_like(&self) -> DenseLayer {
        DenseLayer {
            rows: self.rows,
            cols: self.cols,
            weights: vec![0.0; self.weights.len()],
            biases: vec![0.0; self.biases.len()],
        }
    }
}

/// Parameters of a rectifier MLP with a linear output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetParams {
    pub sizes: Vec<usize>,
    pub layers: Vec<DenseLayer>,
}

/// Activations recorded by a forward pass, sufficient for the backward
/// pass: `post[0]` is the input, `post[k+1]` the output of layer k.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    post: Vec<Vec<f64>>,
}

/// Per-layer gradients, congruent with `NetParams`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetGrads {
    pub layers: Vec<DenseLayer>,
}

impl NetGrads {
    pub fn zeros_like(params: &NetParams) -> NetGrads {
        NetGrads {
            layers: params.layers.iter().map(|l| l.zeros_like()).collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for layer in &mut self.layers {
            for w in &mut layer.weights {
                *w *= factor;
            }
            for b in &mut layer.biases {
                *b *= factor;
            }
        }
    }

    pub fn add(&mut self, other: &NetGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += y;
            }
            for (x, y) in a.biases.iter_mut().zip(&b.biases) {
                *x += y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|w| w.is_finite()) && l.biases.iter().all(|b| b.is_finite())
        })
    }
}

/// Glorot-uniform initialization: weights in +-sqrt(6/(fan_in+fan_out)),
/// biases zero. Deterministic for a given rng state.
pub fn init_network(layer_sizes: &[usize], rng: &mut ChaCha8Rng) -> Result<NetParams, NnError> {
    if layer_sizes.len() < 2 {
        return Err(NnError::InvalidSizes("need at least input and output layers".into()));
    }
    if layer_sizes.iter().any(|&s| s == 0) {
        return Err(NnError::InvalidSizes("layer sizes must be at least 1".into()));
    }
    let mut layers = Vec::with_capacity(layer_sizes.len() - 1);
    for w in layer_sizes.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weights = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        layers.push(DenseLayer {
            rows: fan_out,
            cols: fan_in,
            weights,
            biases: vec![0.0; fan_out],
        });
    }
    Ok(NetParams { sizes: layer_sizes.to_vec(), layers })
}

/// Forward pass: affine + rectifier on hidden layers, affine output.
pub fn forward(params: &NetParams, input: &[f64]) -> Result<(Vec<f64>, ForwardCache), NnError> {
    if input.len() != params.sizes[0] {
        return Err(NnError::DimensionMismatch { expected: params.sizes[0], got: input.len() });
    }
    let mut post = Vec::with_capacity(params.layers.len() + 1);
    post.push(input.to_vec());
    let last = params.layers.len() - 1;
    for (k, layer) in params.layers.iter().enumerate() {
        let x = &post[k];
        let mut out = vec![0.0; layer.rows];
        for r in 0..layer.rows {
            let row = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
            let mut acc = layer.biases[r];
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            out[r] = if k < last { acc.max(0.0) } else { acc };
        }
        post.push(out);
    }
    let output = post.last().unwrap().clone();
    Ok((output, ForwardCache { post }))
}

/// Output of `forward` without the cache, for read-only evaluation.
pub fn evaluate(params: &NetParams, input: &[f64]) -> Result<Vec<f64>, NnError> {
    forward(params, input).map(|(out, _)| out)
}

/// Exact reverse-mode gradients of `output . cotangent` with respect to
/// every parameter, plus the input cotangent (needed to push critic
/// gradients through action inputs).
pub fn gradient(
    params: &NetParams,
    cache: &ForwardCache,
    output_cotangent: &[f64],
) -> Result<(NetGrads, Vec<f64>), NnError> {
    if cache.post.len() != params.layers.len() + 1 {
        return Err(NnError::StaleCache);
    }
    for (k, layer) in params.layers.iter().enumerate() {
        if cache.post[k].len() != layer.cols || cache.post[k + 1].len() != layer.rows {
            return Err(NnError::StaleCache);
        }
    }
    let last = params.layers.len() - 1;
    if output_cotangent.len() != params.layers[last].rows {
        return Err(NnError::DimensionMismatch {
            expected: params.layers[last].rows,
            got: output_cotangent.len(),
        });
    }

    let mut grads = NetGrads::zeros_like(params);
    let mut delta = output_cotangent.to_vec();
    for k in (0..params.layers.len()).rev() {
        let layer = &params.layers[k];
        // Hidden layers pass through the rectifier: dead units kill the
        // cotangent (post == 0 iff pre <= 0 almost everywhere).
        if k < last {
            for (d, &h) in delta.iter_mut().zip(&cache.post[k + 1]) {
                if h <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        let x = &cache.post[k];
        let g = &mut grads.layers[k];
        for r in 0..layer.rows {
            let dr = delta[r];
            g.biases[r] = dr;
            let gw = &mut g.weights[r * layer.cols..(r + 1) * layer.cols];
            for (gwc, xi) in gw.iter_mut().zip(x) {
                *gwc = dr * xi;
            }
        }
        let mut prev = vec![0.0; layer.cols];
        for r in 0..layer.rows {
            let dr = delta[r];
            let row = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
            for (p, w) in prev.iter_mut().zip(row) {
                *p += dr * w;
            }
        }
        delta = prev;
    }
    Ok((grads, delta))
}

/// Adaptive-moment optimizer state, congruent with one `NetParams`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    pub m: Vec<DenseLayer>,
    pub v: Vec<DenseLayer>,
}

impl OptimizerState {
    pub fn new(params: &NetParams, learning_rate: f64) -> OptimizerState {
        OptimizerState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: params.layers.iter().map(|l| l.zeros_like()).collect(),
            v: params.layers.iter().map(|l| l.zeros_like()).collect(),
        }
    }
}

/// One bias-corrected adaptive-moment update in place. Non-finite
/// gradients skip the update and return false.
pub fn adam_step(params: &mut NetParams, grads: &NetGrads, state: &mut OptimizerState) -> bool {
    if !grads.is_finite() {
        return false;
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for (k, layer) in params.layers.iter_mut().enumerate() {
        let g = &grads.layers[k];
        let m = &mut state.m[k];
        let v = &mut state.v[k];
        for i in 0..layer.weights.len() {
            m.weights[i] = state.beta1 * m.weights[i] + (1.0 - state.beta1) * g.weights[i];
            v.weights[i] =
                state.beta2 * v.weights[i] + (1.0 - state.beta2) * g.weights[i] * g.weights[i];
            let m_hat = m.weights[i] / bc1;
            let v_hat = v.weights[i] / bc2;
            layer.weights[i] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
        }
        for i in 0..layer.biases.len() {
            m.biases[i] = state.beta1 * m.biases[i] + (1.0 - state.beta1) * g.biases[i];
            v.biases[i] =
                state.beta2 * v.biases[i] + (1.0 - state.beta2) * g.biases[i] * g.biases[i];
            let m_hat = m.biases[i] / bc1;
            let v_hat = v.biases[i] / bc2;
            layer.biases[i] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
    true
}

/// target <- (1 - tau) target + tau online, elementwise.
pub fn soft_update(target: &mut NetParams, online: &NetParams, tau: f64) -> Result<(), NnError> {
    if target.sizes != online.sizes {
        return Err(NnError::DimensionMismatch {
            expected: online.sizes.len(),
            got: target.sizes.len(),
        });
    }
    for (t, o) in target.layers.iter_mut().zip(&online.layers) {
        for (tw, ow) in t.weights.iter_mut().zip(&o.weights) {
            *tw = (1.0 - tau) * *tw + tau * ow;
        }
        for (tb, ob) in t.biases.iter_mut().zip(&o.biases) {
            *tb = (1.0 - tau) * *tb + tau * ob;
        }
    }
    Ok(())
}

/// A sampled squashed-Gaussian action with its log-density.
#[derive(Debug, Clone)]
pub struct SquashedSample {
    /// tanh-squashed action, strictly inside (-1, 1)^d.
    pub action: Vec<f64>,
    /// log pi(action), with the tanh change-of-variables correction.
    pub log_prob: f64,
    /// Pre-squash Gaussian draw, kept for reparameterized gradients.
    pub pre_tanh: Vec<f64>,
}

/// Squash a reparameterized Gaussian draw u = mean + exp(log_std) * noise
/// through tanh. `log_std` is clamped to [-20, 2] before use.
pub fn sample_squashed_gaussian(mean: &[f64], log_std: &[f64], noise: &[f64]) -> SquashedSample {
    debug_assert_eq!(mean.len(), log_std.len());
    debug_assert_eq!(mean.len(), noise.len());
    let mut action = Vec::with_capacity(mean.len());
    let mut pre_tanh = Vec::with_capacity(mean.len());
    let mut log_prob = 0.0;
    for i in 0..mean.len() {
        let ls = log_std[i].clamp(LOG_STD_MIN, LOG_STD_MAX);
        let u = mean[i] + ls.exp() * noise[i];
        // tanh saturates to exactly +-1.0 in f64 beyond |u| ~ 19; keep the
        // action strictly inside the box.
        let a = u.tanh().clamp(-(1.0 - 1e-12), 1.0 - 1e-12);
        // Gaussian log-density of u plus the squash correction.
        log_prob += -LN_SQRT_2PI - ls - 0.5 * noise[i] * noise[i];
        log_prob -= (1.0 - a * a + SQUASH_EPS).ln();
        action.push(a);
        pre_tanh.push(u);
    }
    SquashedSample { action, log_prob, pre_tanh }
}
