//! Two-layer perceptron domain classifier and the gradient reversal layer.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Default reversal strength.
pub const DEFAULT_GRL_LAMBDA: f64 = 0.3;

/// Identity on the forward pass; scales gradients by `-lambda` on the way
/// back.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientReversal {
    pub lambda: f64,
}

impl Default for GradientReversal {
    fn default() -> Self {
        GradientReversal {
            lambda: DEFAULT_GRL_LAMBDA,
        }
    }
}

impl GradientReversal {
    pub fn forward<'a>(&self, x: &'a DVector<f64>) -> &'a DVector<f64> {
        x
    }

    pub fn backward(&self, upstream: &DVector<f64>) -> DVector<f64> {
        upstream * -self.lambda
    }
}

/// `-lambda * upstream_grad`.
pub fn grl_backward(upstream: &[f64], lambda: f64) -> Vec<f64> {
    upstream.iter().map(|g| -lambda * g).collect()
}

/// `logits = W2 tanh(W1 x + b1) + b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinyClassifier {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
    pub grl: f64,
}

/// Parameter gradients, shaped like [`TinyClassifier`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierGrads {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
}

/// Forward activations kept for the backward pass.
pub struct Activations {
    pub hidden: DVector<f64>,
    pub logits: DVector<f64>,
}

impl TinyClassifier {
    /// Xavier-style normal initialisation.
    pub fn new(input: usize, hidden: usize, classes: usize, rng: &mut impl Rng) -> Self {
        let w = |rows: usize, cols: usize, rng: &mut dyn rand::RngCore| {
            let normal = Normal::new(0.0, (1.0 / cols as f64).sqrt()).expect("positive std");
            DMatrix::from_fn(rows, cols, |_, _| normal.sample(rng))
        };
        TinyClassifier {
            w1: w(hidden, input, rng),
            b1: DVector::zeros(hidden),
            w2: w(classes, hidden, rng),
            b2: DVector::zeros(classes),
            grl: DEFAULT_GRL_LAMBDA,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.w2.nrows()
    }

    pub fn forward(&self, x: &DVector<f64>) -> Activations {
        let hidden = (&self.w1 * x + &self.b1).map(f64::tanh);
        let logits = &self.w2 * &hidden + &self.b2;
        Activations { hidden, logits }
    }

    pub fn predict(&self, x: &DVector<f64>) -> usize {
        self.forward(x).logits.argmax().0
    }

    pub fn zero_grads(&self) -> ClassifierGrads {
        ClassifierGrads {
            w1: DMatrix::zeros(self.w1.nrows(), self.w1.ncols()),
            b1: DVector::zeros(self.b1.len()),
            w2: DMatrix::zeros(self.w2.nrows(), self.w2.ncols()),
            b2: DVector::zeros(self.b2.len()),
        }
    }

    /// Accumulates `scale * dL/dθ` into `grads` given `dL/dlogits`, and
    /// returns `scale * dL/dx`.
    pub fn backward(
        &self,
        x: &DVector<f64>,
        act: &Activations,
        d_logits: &DVector<f64>,
        scale: f64,
        grads: &mut ClassifierGrads,
    ) -> DVector<f64> {
        let d2 = d_logits * scale;
        grads.w2.ger(1.0, &d2, &act.hidden, 1.0);
        grads.b2 += &d2;
        let mut da = self.w2.tr_mul(&d2);
        da.zip_apply(&act.hidden, |d, h| *d *= 1.0 - h * h);
        grads.w1.ger(1.0, &da, x, 1.0);
        grads.b1 += &da;
        self.w1.tr_mul(&da)
    }

    pub fn apply_grads(&mut self, grads: &ClassifierGrads, lr: f64) {
        self.w1 -= &grads.w1 * lr;
        self.b1 -= &grads.b1 * lr;
        self.w2 -= &grads.w2 * lr;
        self.b2 -= &grads.b2 * lr;
    }
}

/// `logsumexp(logits) - logits[target]`.
pub fn cross_entropy(logits: &DVector<f64>, target: usize) -> f64 {
    let m = logits.max();
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    lse - logits[target]
}

pub fn softmax(logits: &DVector<f64>) -> DVector<f64> {
    let m = logits.max();
    let e = logits.map(|l| (l - m).exp());
    let s = e.sum();
    e / s
}

/// Gradient of [`cross_entropy`] with respect to the logits.
pub fn cross_entropy_grad(logits: &DVector<f64>, target: usize) -> DVector<f64> {
    let mut g = softmax(logits);
    g[target] -= 1.0;
    g
}
