//! Feed-forward network: one rectified hidden layer, trained with
//! momentum SGD against hard labels, soft targets, or a mixture of both.
//!
//! Everything runs in f64. Models are plain data; training returns a new
//! `ModelParams`, so trained models can be shared read-only across
//! threads.

mod loss;
mod train;

pub use loss::{loss_and_grad, Gradients, Targets};
pub use train::sgd_train;

use rand::distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::mat::Matrix;
use crate::seed::rng_from_seed;

/// Weights and biases of an input -> hidden -> output network.
///
/// `w1` is `hidden x input_dim`, `w2` is `classes x hidden`, both
/// row-major. The hidden layer is rectified; outputs are raw logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub input_dim: usize,
    pub hidden: usize,
    pub classes: usize,
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

/// Training hyperparameters.
///
/// The default profile is 20 epochs of momentum SGD with learning rate
/// 0.01 and momentum 0.99.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Softmax temperature for soft-target training. Hard-label training
    /// always uses temperature 1.
    pub temperature: f64,
    /// Mixing weight for `Targets::Mixed`: `alpha` on the soft loss,
    /// `1 - alpha` on the hard loss.
    pub alpha: f64,
    /// Multiply the soft-loss contribution by `1 / temperature^2`.
    pub gradient_rescale: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            learning_rate: 0.01,
            momentum: 0.99,
            batch_size: 64,
            seed: 0,
            temperature: 1.0,
            alpha: 1.0,
            gradient_rescale: false,
        }
    }
}

impl TrainConfig {
    /// Checks ranges. A zero learning rate is accepted and turns training
    /// into a no-op.
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::invalid_argument("epochs must be >= 1"));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid_argument("learning_rate must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid_argument("momentum must be in [0, 1)"));
        }
        if self.batch_size < 1 {
            return Err(Error::invalid_argument("batch_size must be >= 1"));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::invalid_argument("temperature must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid_argument("alpha must be in [0, 1]"));
        }
        Ok(())
    }
}

/// Initializes a model with uniform weights in
/// `[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]` per layer and
/// zero biases. Deterministic given the seed.
pub fn init_model(input_dim: usize, hidden: usize, classes: usize, seed: u64) -> Result<ModelParams> {
    if input_dim == 0 || hidden == 0 || classes == 0 {
        return Err(Error::invalid_argument(format!(
            "all model dimensions must be >= 1, got ({input_dim}, {hidden}, {classes})"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut layer = |fan_in: usize, fan_out: usize| -> Matrix {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new(-limit, limit).expect("limit > 0");
        let mut m = Matrix::zeros(fan_out, fan_in);
        for i in 0..fan_out {
            for v in m.row_mut(i) {
                *v = dist.sample(&mut rng);
            }
        }
        m
    };
    let w1 = layer(input_dim, hidden);
    let w2 = layer(hidden, classes);
    Ok(ModelParams {
        input_dim,
        hidden,
        classes,
        w1,
        b1: vec![0.0; hidden],
        w2,
        b2: vec![0.0; classes],
    })
}

impl ModelParams {
    /// Raw logits for one input: `w2 * relu(w1 x + b1) + b2`.
    pub fn forward_logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::invalid_argument(format!(
                "input length {} does not match input_dim {}",
                x.len(),
                self.input_dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_argument("input contains a non-finite entry"));
        }
        let mut hidden = vec![0.0; self.hidden];
        let mut logits = vec![0.0; self.classes];
        self.forward_into(x, &mut hidden, &mut logits);
        Ok(logits)
    }

    /// Unchecked forward pass into caller buffers. `hidden` receives the
    /// post-activation hidden values; inputs are assumed validated.
    pub(crate) fn forward_into(&self, x: &[f64], hidden: &mut [f64], logits: &mut [f64]) {
        for (k, h) in hidden.iter_mut().enumerate() {
            let mut acc = self.b1[k];
            for (w, xv) in self.w1.row(k).iter().zip(x) {
                acc += w * xv;
            }
            *h = if acc > 0.0 { acc } else { 0.0 };
        }
        for (c, z) in logits.iter_mut().enumerate() {
            let mut acc = self.b2[c];
            for (w, hv) in self.w2.row(c).iter().zip(hidden.iter()) {
                acc += w * hv;
            }
            *z = acc;
        }
    }

    /// Predicted class: argmax of the logits (lowest index wins ties).
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let logits = self.forward_logits(x)?;
        Ok(argmax(&logits))
    }

    /// Fraction of rows whose argmax logit matches the label.
    pub fn accuracy(&self, features: &Matrix, labels: &[usize]) -> Result<f64> {
        if features.rows() != labels.len() {
            return Err(Error::invalid_argument("features/labels length mismatch"));
        }
        if labels.is_empty() {
            return Err(Error::invalid_argument("empty evaluation set"));
        }
        let mut correct = 0usize;
        let mut hidden = vec![0.0; self.hidden];
        let mut logits = vec![0.0; self.classes];
        for (i, &y) in labels.iter().enumerate() {
            self.forward_into(features.row(i), &mut hidden, &mut logits);
            if argmax(&logits) == y {
                correct += 1;
            }
        }
        Ok(correct as f64 / labels.len() as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let shape_ok = self.w1.rows() == self.hidden
            && self.w1.cols() == self.input_dim
            && self.b1.len() == self.hidden
            && self.w2.rows() == self.classes
            && self.w2.cols() == self.hidden
            && self.b2.len() == self.classes;
        if !shape_ok {
            return Err(Error::InvalidData("inconsistent parameter shapes".into()));
        }
        let finite = self.w1.data().iter().all(|v| v.is_finite())
            && self.b1.iter().all(|v| v.is_finite())
            && self.w2.data().iter().all(|v| v.is_finite())
            && self.b2.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidData("non-finite parameter entry".into()));
        }
        Ok(())
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Temperature-scaled softmax: `p_i = exp(z_i/h - max(z)/h) / sum_j ...`,
/// stabilized by max subtraction. At `h = 1` this is the plain softmax.
pub fn softmax_temperature(logits: &[f64], h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::invalid_argument("temperature must be > 0"));
    }
    if logits.is_empty() {
        return Err(Error::invalid_argument("empty logit vector"));
    }
    let mut out = vec![0.0; logits.len()];
    softmax_temperature_into(logits, h, &mut out);
    Ok(out)
}

pub(crate) fn softmax_temperature_into(logits: &[f64], h: f64, out: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let shift = max / h;
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        let e = (z / h - shift).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Log of the temperature-scaled softmax, for cross-entropy without
/// underflow.
pub(crate) fn log_softmax_temperature_into(logits: &[f64], h: f64, out: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let shift = max / h;
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        let s = z / h - shift;
        *o = s;
        sum += s.exp();
    }
    let lse = sum.ln();
    for o in out.iter_mut() {
        *o -= lse;
    }
}
