//! Differentiable per-sample losses.
//!
//! A [`LossModel`] maps a flat parameter vector and one sample to a loss
//! and (optionally) accumulates that sample's gradient. Parameter-only
//! penalty terms live in [`LossModel::penalty`] so that the mean over a
//! batch adds them exactly once.

use rand::Rng;
use rand::RngCore;

/// Per-sample loss `l(params; features, label)` plus an optional penalty
/// `R(params)`; the local objective over a sample set `D` is
/// `(1/|D|) sum_{xi in D} l(params; xi) + R(params)`.
pub trait LossModel: Send + Sync + std::fmt::Debug {
    /// Length of the parameter vector.
    fn dim(&self) -> usize;

    /// Loss of one sample.
    fn sample_loss(&self, params: &[f64], features: &[f64], label: usize) -> f64;

    /// Loss of one sample; its gradient is *added* into `grad`.
    fn sample_loss_grad(
        &self,
        params: &[f64],
        features: &[f64],
        label: usize,
        grad: &mut [f64],
    ) -> f64;

    /// Parameter-only term; its gradient is *added* into `grad` when given.
    fn penalty(&self, _params: &[f64], _grad: Option<&mut [f64]>) -> f64 {
        0.0
    }

    /// Predicted class, for models that classify.
    fn predict(&self, _params: &[f64], _features: &[f64]) -> Option<usize> {
        None
    }

    /// Draw an initial parameter vector.
    fn init_params(&self, rng: &mut dyn RngCore) -> Vec<f64>;
}

/// `l(y; xi) = 0.5 * ||y - xi||^2` where `xi` is the sample's feature row.
#[derive(Debug, Clone)]
pub struct Quadratic {
    dim: usize,
}

impl Quadratic {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl LossModel for Quadratic {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample_loss(&self, params: &[f64], features: &[f64], _label: usize) -> f64 {
        0.5 * params
            .iter()
            .zip(features)
            .map(|(y, x)| (y - x) * (y - x))
            .sum::<f64>()
    }

    fn sample_loss_grad(
        &self,
        params: &[f64],
        features: &[f64],
        label: usize,
        grad: &mut [f64],
    ) -> f64 {
        for ((g, y), x) in grad.iter_mut().zip(params).zip(features) {
            *g += y - x;
        }
        self.sample_loss(params, features, label)
    }

    fn init_params(&self, _rng: &mut dyn RngCore) -> Vec<f64> {
        vec![0.0; self.dim]
    }
}

/// Numerically stable softmax cross-entropy on `logits`. Writes
/// `softmax(logits) - onehot(label)` into `dlogits` and returns the loss.
pub(crate) fn softmax_cross_entropy(logits: &[f64], label: usize, dlogits: &mut [f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (d, &l) in dlogits.iter_mut().zip(logits) {
        *d = (l - max).exp();
        sum += *d;
    }
    for d in dlogits.iter_mut() {
        *d /= sum;
    }
    let loss = sum.ln() + max - logits[label];
    dlogits[label] -= 1.0;
    loss
}

pub(crate) fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    sum.ln() + max - logits[label]
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Multinomial logistic regression with an optional non-convex penalty
/// `lambda * sum_k w_k^2 / (1 + w_k^2)` over every parameter.
///
/// Layout: weights `C x d` row-major, then the `C` biases.
#[derive(Debug, Clone)]
pub struct SoftmaxRegression {
    n_features: usize,
    n_classes: usize,
    penalty: f64,
}

impl SoftmaxRegression {
    pub fn new(n_features: usize, n_classes: usize) -> Self {
        Self {
            n_features,
            n_classes,
            penalty: 0.0,
        }
    }

    /// Switch on the bounded non-convex penalty with weight `lambda`.
    pub fn with_nonconvex_penalty(mut self, lambda: f64) -> Self {
        self.penalty = lambda;
        self
    }

    fn logits(&self, params: &[f64], features: &[f64], out: &mut [f64]) {
        let (w, b) = params.split_at(self.n_classes * self.n_features);
        for (c, o) in out.iter_mut().enumerate() {
            let row = &w[c * self.n_features..(c + 1) * self.n_features];
            *o = b[c] + crate::linalg::dot(row, features);
        }
    }
}

impl LossModel for SoftmaxRegression {
    fn dim(&self) -> usize {
        self.n_classes * (self.n_features + 1)
    }

    fn sample_loss(&self, params: &[f64], features: &[f64], label: usize) -> f64 {
        let mut logits = vec![0.0; self.n_classes];
        self.logits(params, features, &mut logits);
        cross_entropy(&logits, label)
    }

    fn sample_loss_grad(
        &self,
        params: &[f64],
        features: &[f64],
        label: usize,
        grad: &mut [f64],
    ) -> f64 {
        let mut logits = vec![0.0; self.n_classes];
        self.logits(params, features, &mut logits);
        let mut d = vec![0.0; self.n_classes];
        let loss = softmax_cross_entropy(&logits, label, &mut d);
        let (gw, gb) = grad.split_at_mut(self.n_classes * self.n_features);
        for (c, dc) in d.iter().enumerate() {
            crate::linalg::axpy(
                &mut gw[c * self.n_features..(c + 1) * self.n_features],
                *dc,
                features,
            );
            gb[c] += dc;
        }
        loss
    }

    fn penalty(&self, params: &[f64], grad: Option<&mut [f64]>) -> f64 {
        if self.penalty == 0.0 {
            return 0.0;
        }
        if let Some(grad) = grad {
            for (g, w) in grad.iter_mut().zip(params) {
                let q = 1.0 + w * w;
                *g += self.penalty * 2.0 * w / (q * q);
            }
        }
        self.penalty * params.iter().map(|w| w * w / (1.0 + w * w)).sum::<f64>()
    }

    fn predict(&self, params: &[f64], features: &[f64]) -> Option<usize> {
        let mut logits = vec![0.0; self.n_classes];
        self.logits(params, features, &mut logits);
        Some(argmax(&logits))
    }

    fn init_params(&self, _rng: &mut dyn RngCore) -> Vec<f64> {
        vec![0.0; self.dim()]
    }
}

/// One-hidden-layer perceptron `d -> H -> C` with ReLU hidden units and a
/// softmax cross-entropy output.
///
/// Parameter layout (weights then biases, layer by layer, row-major):
///
/// ```text
/// [ W1 (H x d) | b1 (H) | W2 (C x H) | b2 (C) ]
/// ```
///
/// The ReLU derivative at exactly zero is taken as 0.
#[derive(Debug, Clone)]
pub struct Mlp {
    n_inputs: usize,
    hidden: usize,
    n_classes: usize,
}

/// Offsets of the four parameter blocks.
#[derive(Debug, Clone, Copy)]
struct MlpLayout {
    b1: usize,
    w2: usize,
    b2: usize,
    end: usize,
}

impl Mlp {
    pub fn new(n_inputs: usize, hidden: usize, n_classes: usize) -> Self {
        Self {
            n_inputs,
            hidden,
            n_classes,
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    fn layout(&self) -> MlpLayout {
        let b1 = self.hidden * self.n_inputs;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.n_classes * self.hidden;
        MlpLayout {
            b1,
            w2,
            b2,
            end: b2 + self.n_classes,
        }
    }

    /// Hidden activations and output logits.
    fn forward(&self, params: &[f64], features: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let l = self.layout();
        let mut hidden = params[l.b1..l.w2].to_vec();
        for (h, act) in hidden.iter_mut().enumerate() {
            let row = &params[h * self.n_inputs..(h + 1) * self.n_inputs];
            *act += sparse_dot(row, features);
            *act = act.max(0.0);
        }
        let mut logits = params[l.b2..l.end].to_vec();
        for (c, o) in logits.iter_mut().enumerate() {
            let row = &params[l.w2 + c * self.hidden..l.w2 + (c + 1) * self.hidden];
            *o += crate::linalg::dot(row, &hidden);
        }
        (hidden, logits)
    }
}

/// Dot product that skips zero features (image inputs are mostly zero).
#[inline]
fn sparse_dot(row: &[f64], features: &[f64]) -> f64 {
    row.iter()
        .zip(features)
        .filter(|(_, x)| **x != 0.0)
        .map(|(w, x)| w * x)
        .sum()
}

impl LossModel for Mlp {
    fn dim(&self) -> usize {
        self.layout().end
    }

    fn sample_loss(&self, params: &[f64], features: &[f64], label: usize) -> f64 {
        let (_, logits) = self.forward(params, features);
        cross_entropy(&logits, label)
    }

    fn sample_loss_grad(
        &self,
        params: &[f64],
        features: &[f64],
        label: usize,
        grad: &mut [f64],
    ) -> f64 {
        let l = self.layout();
        let (hidden, logits) = self.forward(params, features);
        let mut dlogits = vec![0.0; self.n_classes];
        let loss = softmax_cross_entropy(&logits, label, &mut dlogits);

        let mut dhidden = vec![0.0; self.hidden];
        for (c, dc) in dlogits.iter().enumerate() {
            let w2_row = l.w2 + c * self.hidden;
            crate::linalg::axpy(&mut grad[w2_row..w2_row + self.hidden], *dc, &hidden);
            crate::linalg::axpy(&mut dhidden, *dc, &params[w2_row..w2_row + self.hidden]);
            grad[l.b2 + c] += dc;
        }
        for (h, dh) in dhidden.iter().enumerate() {
            if hidden[h] <= 0.0 {
                continue;
            }
            grad[l.b1 + h] += dh;
            let row = &mut grad[h * self.n_inputs..(h + 1) * self.n_inputs];
            for (g, x) in row.iter_mut().zip(features) {
                if *x != 0.0 {
                    *g += dh * x;
                }
            }
        }
        loss
    }

    fn predict(&self, params: &[f64], features: &[f64]) -> Option<usize> {
        Some(argmax(&self.forward(params, features).1))
    }

    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` for weights and biases of
    /// each layer.
    fn init_params(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let l = self.layout();
        let a1 = 1.0 / (self.n_inputs as f64).sqrt();
        let a2 = 1.0 / (self.hidden as f64).sqrt();
        (0..l.end)
            .map(|k| {
                let a = if k < l.w2 { a1 } else { a2 };
                rng.gen_range(-a..a)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_softmax_loss_is_ln_classes() {
        let logits = [0.0; 10];
        assert!((cross_entropy(&logits, 3) - 10f64.ln()).abs() < 1e-15);
        let mut d = [0.0; 10];
        let loss = softmax_cross_entropy(&logits, 3, &mut d);
        assert!((loss - std::f64::consts::LN_10).abs() < 1e-12);
        assert!((d.iter().sum::<f64>()).abs() < 1e-15);
    }

    #[test]
    fn mlp_layout_sizes() {
        let m = Mlp::new(784, 30, 10);
        assert_eq!(m.dim(), 784 * 30 + 30 + 30 * 10 + 10);
    }

    #[test]
    fn penalty_is_bounded_and_smooth() {
        let m = SoftmaxRegression::new(1, 2).with_nonconvex_penalty(0.5);
        let p = vec![1e6; 4];
        assert!(m.penalty(&p, None) <= 0.5 * 4.0);
        let mut g = vec![0.0; 4];
        m.penalty(&[0.0; 4], Some(&mut g));
        assert_eq!(g, vec![0.0; 4]);
    }
}
