//! Cross-entropy losses and exact analytic gradients.
//!
//! Three target kinds share one backward pass: hard labels use the plain
//! softmax, soft targets use the temperature-scaled softmax, and the
//! mixed loss combines both as `alpha * soft + (1 - alpha) * hard`. With
//! `gradient_rescale` on, the soft contribution (loss and gradient alike)
//! is multiplied by `1 / temperature^2`, which keeps soft-target gradient
//! magnitudes comparable across temperatures.

use crate::error::{Error, Result};
use crate::mat::Matrix;

use super::{log_softmax_temperature_into, softmax_temperature_into, ModelParams, TrainConfig};

/// Training targets for one batch.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    /// One class index per row.
    Hard(&'a [usize]),
    /// One probability row per example, `classes` wide, each summing to 1.
    Soft(&'a Matrix),
    /// Both at once, blended by `TrainConfig::alpha`.
    Mixed { soft: &'a Matrix, hard: &'a [usize] },
}

impl<'a> Targets<'a> {
    pub fn len(&self) -> usize {
        match self {
            Targets::Hard(y) => y.len(),
            Targets::Soft(q) => q.rows(),
            Targets::Mixed { hard, .. } => hard.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self, classes: usize) -> Result<()> {
        let check_hard = |y: &[usize]| -> Result<()> {
            if let Some(&bad) = y.iter().find(|&&c| c >= classes) {
                return Err(Error::invalid_argument(format!(
                    "label {bad} out of range for {classes} classes"
                )));
            }
            Ok(())
        };
        let check_soft = |q: &Matrix| -> Result<()> {
            if q.cols() != classes {
                return Err(Error::invalid_argument(format!(
                    "soft targets are {} wide, model has {classes} classes",
                    q.cols()
                )));
            }
            for i in 0..q.rows() {
                let row = q.row(i);
                if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::invalid_argument(format!(
                        "soft target row {i} has a negative or non-finite entry"
                    )));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-6 {
                    return Err(Error::invalid_argument(format!(
                        "soft target row {i} sums to {sum}, expected 1"
                    )));
                }
            }
            Ok(())
        };
        match self {
            Targets::Hard(y) => check_hard(y),
            Targets::Soft(q) => check_soft(q),
            Targets::Mixed { soft, hard } => {
                if soft.rows() != hard.len() {
                    return Err(Error::invalid_argument(
                        "mixed targets: soft and hard lengths differ",
                    ));
                }
                check_hard(hard)?;
                check_soft(soft)
            }
        }
    }
}

/// Parameter gradients, same shapes as the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(m: &ModelParams) -> Gradients {
        Gradients {
            w1: Matrix::zeros(m.hidden, m.input_dim),
            b1: vec![0.0; m.hidden],
            w2: Matrix::zeros(m.classes, m.hidden),
            b2: vec![0.0; m.classes],
        }
    }

    fn reset(&mut self) {
        self.w1.data_mut().fill(0.0);
        self.b1.fill(0.0);
        self.w2.data_mut().fill(0.0);
        self.b2.fill(0.0);
    }
}

/// Mean loss over the batch and its exact gradient with respect to every
/// parameter.
pub fn loss_and_grad(
    model: &ModelParams,
    features: &Matrix,
    targets: &Targets,
    cfg: &TrainConfig,
) -> Result<(f64, Gradients)> {
    cfg.validate()?;
    if features.cols() != model.input_dim {
        return Err(Error::invalid_argument(format!(
            "batch is {} wide, model expects {}",
            features.cols(),
            model.input_dim
        )));
    }
    if features.rows() != targets.len() {
        return Err(Error::invalid_argument(format!(
            "batch has {} rows but {} targets",
            features.rows(),
            targets.len()
        )));
    }
    if features.rows() == 0 {
        return Err(Error::invalid_argument("empty batch"));
    }
    targets.validate(model.classes)?;
    let mut grads = Gradients::zeros_like(model);
    let all: Vec<usize> = (0..features.rows()).collect();
    let mut scratch = Scratch::new(model);
    let loss = accumulate(model, features, targets, cfg, &all, &mut grads, &mut scratch);
    Ok((loss, grads))
}

/// Per-example work buffers reused across batches.
pub(crate) struct Scratch {
    hidden: Vec<f64>,
    logits: Vec<f64>,
    probs: Vec<f64>,
    logp: Vec<f64>,
    gz: Vec<f64>,
}

impl Scratch {
    pub(crate) fn new(model: &ModelParams) -> Scratch {
        Scratch {
            hidden: vec![0.0; model.hidden],
            logits: vec![0.0; model.classes],
            probs: vec![0.0; model.classes],
            logp: vec![0.0; model.classes],
            gz: vec![0.0; model.classes],
        }
    }
}

/// Accumulates mean loss and gradients over `idx` into `grads` (which is
/// reset first). Inputs are assumed validated. Shared by `loss_and_grad`
/// and the minibatch loop in training.
pub(crate) fn accumulate(
    model: &ModelParams,
    features: &Matrix,
    targets: &Targets,
    cfg: &TrainConfig,
    idx: &[usize],
    grads: &mut Gradients,
    s: &mut Scratch,
) -> f64 {
    grads.reset();
    let inv_b = 1.0 / idx.len() as f64;
    let h = cfg.temperature;
    let soft_scale = if cfg.gradient_rescale { 1.0 / (h * h) } else { 1.0 };
    let mut loss = 0.0;
    for &row in idx {
        let x = features.row(row);
        model.forward_into(x, &mut s.hidden, &mut s.logits);

        // Per-example loss and gradient at the logits, mean-scaled.
        match targets {
            Targets::Hard(y) => {
                loss += hard_term(&s.logits, y[row], &mut s.logp, &mut s.gz, 1.0) * inv_b;
            }
            Targets::Soft(q) => {
                let l = soft_term(&s.logits, q.row(row), h, soft_scale, &mut s.probs, &mut s.logp, &mut s.gz);
                loss += l * inv_b;
            }
            Targets::Mixed { soft, hard } => {
                let a = cfg.alpha;
                let ls = soft_term(&s.logits, soft.row(row), h, soft_scale, &mut s.probs, &mut s.logp, &mut s.gz);
                // The soft term fills gz; blend the hard term in on top so
                // that alpha = 0 and alpha = 1 reduce bitwise to the pure
                // losses.
                for g in s.gz.iter_mut() {
                    *g *= a;
                }
                let mut gz_hard = vec![0.0; model.classes];
                let lh = hard_term(&s.logits, hard[row], &mut s.logp, &mut gz_hard, 1.0);
                for (g, gh) in s.gz.iter_mut().zip(&gz_hard) {
                    *g += (1.0 - a) * gh;
                }
                loss += (a * ls + (1.0 - a) * lh) * inv_b;
            }
        }

        // Backpropagate gz through the two layers.
        for (c, &gzc) in s.gz.iter().enumerate() {
            let g = gzc * inv_b;
            if g == 0.0 {
                continue;
            }
            grads.b2[c] += g;
            let w2row = grads.w2.row_mut(c);
            for (w, &hv) in w2row.iter_mut().zip(s.hidden.iter()) {
                *w += g * hv;
            }
        }
        for (k, &hv) in s.hidden.iter().enumerate() {
            if hv <= 0.0 {
                continue; // ReLU gate closed; no gradient flows.
            }
            let mut gh = 0.0;
            for (c, &gzc) in s.gz.iter().enumerate() {
                gh += model.w2.get(c, k) * gzc;
            }
            let g = gh * inv_b;
            if g == 0.0 {
                continue;
            }
            grads.b1[k] += g;
            let w1row = grads.w1.row_mut(k);
            for (w, &xv) in w1row.iter_mut().zip(x) {
                *w += g * xv;
            }
        }
    }
    loss
}

/// Plain-softmax cross-entropy against one label; writes the logit
/// gradient `(p - onehot) * scale` into `gz`. Returns the loss term.
fn hard_term(logits: &[f64], label: usize, logp: &mut [f64], gz: &mut [f64], scale: f64) -> f64 {
    log_softmax_temperature_into(logits, 1.0, logp);
    for (g, &lp) in gz.iter_mut().zip(logp.iter()) {
        *g = lp.exp() * scale;
    }
    gz[label] -= scale;
    -logp[label] * scale
}

/// Temperature-softmax cross-entropy against a distribution; writes the
/// logit gradient `(p - q) / h * scale` into `gz`. Returns the loss term.
fn soft_term(
    logits: &[f64],
    q: &[f64],
    h: f64,
    scale: f64,
    probs: &mut [f64],
    logp: &mut [f64],
    gz: &mut [f64],
) -> f64 {
    log_softmax_temperature_into(logits, h, logp);
    softmax_temperature_into(logits, h, probs);
    let mut loss = 0.0;
    for ((g, (&p, &qv)), &lp) in gz.iter_mut().zip(probs.iter().zip(q)).zip(logp.iter()) {
        *g = (p - qv) / h * scale;
        loss -= qv * lp;
    }
    loss * scale
}
