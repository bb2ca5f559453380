//! Online temperature calibration.
//!
//! A single scalar temperature divides the logits before the softmax. It is
//! optimized by gradient descent on the calibration-set cross-entropy,
//! interleaved with training, and never touches the model parameters. The
//! temperature is parameterized as `T = exp(log_t)` so positivity is
//! structural.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{forward_with_plan, Batch, Mode, ModelParams, Plan};

/// The calibration parameter. `T = exp(log_t)`, initial value 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Temperature {
    pub log_t: f64,
    pub steps: u64,
}

impl Temperature {
    pub fn identity() -> Self {
        Temperature { log_t: 0.0, steps: 0 }
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.log_t.exp()
    }
}

impl Default for Temperature {
    fn default() -> Self {
        Temperature::identity()
    }
}

/// How calibration interleaves with training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibPolicy {
    /// One temperature step every this many training steps.
    pub train_steps_per_calib_step: usize,
    /// Calibration minibatch size (capped at the calibration-set size).
    pub calib_batch_size: usize,
    /// Learning rate for gradient descent on `log_t`.
    pub calib_lr: f64,
    /// Full-batch temperature steps run after training finishes, so reported
    /// numbers do not depend on the interleaving cadence.
    pub refine_steps: usize,
}

impl Default for CalibPolicy {
    fn default() -> Self {
        CalibPolicy {
            train_steps_per_calib_step: 10,
            calib_batch_size: 256,
            calib_lr: 0.01,
            refine_steps: 200,
        }
    }
}

impl CalibPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.train_steps_per_calib_step == 0
            || self.calib_batch_size == 0
            || self.calib_lr <= 0.0
        {
            return Err(Error::Config(
                "calibration policy requires positive cadence, batch size and lr".into(),
            ));
        }
        Ok(())
    }
}

/// `softmax(logits / T)` row-wise. Argmax per row is unchanged for any `T`
/// (up to ties), so calibration never moves predicted classes.
pub fn calibrated_probs(logits: &Matrix, temperature: &Temperature) -> Matrix {
    let mut probs = Matrix::zeros(logits.rows(), logits.cols());
    let t = temperature.value();
    for r in 0..logits.rows() {
        let row = logits.row(r);
        let mut max = f64::NEG_INFINITY;
        for &x in row {
            let v = x / t;
            if v > max {
                max = v;
            }
        }
        let out = probs.row_mut(r);
        let mut denom = 0.0;
        for (o, &x) in out.iter_mut().zip(row) {
            let e = ((x / t) - max).exp();
            *o = e;
            denom += e;
        }
        for o in out.iter_mut() {
            *o /= denom;
        }
    }
    probs
}

/// Gradient of the mean calibrated cross-entropy w.r.t. `log_t`.
///
/// With `u = z/T`: `dL/dlog_t = mean_i (z[y_i] - sum_k p_k z_k) / T`.
pub fn xent_grad_log_t(logits: &Matrix, labels: &[u32], temperature: &Temperature) -> f64 {
    let t = temperature.value();
    let probs = calibrated_probs(logits, temperature);
    let mut acc = 0.0;
    for r in 0..logits.rows() {
        let row = logits.row(r);
        let mut expected = 0.0;
        for (&p, &z) in probs.row(r).iter().zip(row) {
            expected += p * z;
        }
        acc += (row[labels[r] as usize] - expected) / t;
    }
    acc / logits.rows() as f64
}

/// One gradient-descent step on `log_t` for a calibration minibatch whose
/// logits were computed elsewhere. Model parameters are not involved.
pub fn calib_step(
    temperature: &Temperature,
    logits: &Matrix,
    labels: &[u32],
    calib_lr: f64,
) -> Temperature {
    let g = xent_grad_log_t(logits, labels, temperature);
    Temperature {
        log_t: temperature.log_t - calib_lr * g,
        steps: temperature.steps + 1,
    }
}

/// Full-batch calibrated evaluation: mean nats, per-example nats and
/// error-rate, in eval mode. Per-example losses feed the bootstrap later.
pub struct EvalResult {
    pub nats_mean: f64,
    pub nats_per_example: Vec<f64>,
    pub error_rate: f64,
}

pub fn calibrated_xent(
    plan: &Plan,
    params: &ModelParams,
    temperature: &Temperature,
    batch: &Batch,
) -> Result<EvalResult> {
    if batch.is_empty() {
        return Err(Error::Data("evaluating on an empty dataset".into()));
    }
    let logits = forward_with_plan(plan, params, batch, Mode::Eval, 0)?;
    let probs = calibrated_probs(&logits, temperature);
    let mut nats = Vec::with_capacity(batch.len());
    let mut errors = 0usize;
    for r in 0..probs.rows() {
        let label = batch.labels[r] as usize;
        nats.push(-(probs.get(r, label).ln()));
        if argmax(logits.row(r)) != label {
            errors += 1;
        }
    }
    let mut total = 0.0;
    for &x in &nats {
        total += x;
    }
    Ok(EvalResult {
        nats_mean: total / nats.len() as f64,
        nats_per_example: nats,
        error_rate: errors as f64 / batch.len() as f64,
    })
}

/// Argmax with ties broken toward the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = xs[0];
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > best_v {
            best_v = x;
            best = i;
        }
    }
    best
}

/// Post-training refinement: full-calibration-batch gradient descent on
/// `log_t`, keeping the best iterate seen. `T = 1` is always scored as a
/// candidate, so the returned temperature never evaluates worse than the
/// uncalibrated one on the calibration set.
pub fn refine_temperature(
    plan: &Plan,
    params: &ModelParams,
    start: Temperature,
    calib: &Batch,
    policy: &CalibPolicy,
) -> Result<Temperature> {
    let logits = forward_with_plan(plan, params, calib, Mode::Eval, 0)?;
    let ce_at = |log_t: f64| -> f64 {
        let t = Temperature { log_t, steps: 0 };
        let probs = calibrated_probs(&logits, &t);
        let mut total = 0.0;
        for r in 0..probs.rows() {
            total += -(probs.get(r, calib.labels[r] as usize).ln());
        }
        total / calib.len() as f64
    };

    let mut cur = start;
    let mut best_log_t = start.log_t;
    let mut best_ce = ce_at(start.log_t);
    let ce_identity = ce_at(0.0);
    if ce_identity < best_ce {
        best_ce = ce_identity;
        best_log_t = 0.0;
    }

    let mut lr = policy.calib_lr;
    for _ in 0..policy.refine_steps {
        let g = xent_grad_log_t(&logits, &calib.labels, &cur);
        let next = Temperature {
            log_t: cur.log_t - lr * g,
            steps: cur.steps + 1,
        };
        let ce = ce_at(next.log_t);
        if ce < best_ce {
            best_ce = ce;
            best_log_t = next.log_t;
        } else {
            // Overshot: shrink the step and continue from the best point.
            lr *= 0.5;
            cur = Temperature {
                log_t: best_log_t,
                steps: next.steps,
            };
            continue;
        }
        cur = next;
    }
    Ok(Temperature {
        log_t: best_log_t,
        steps: cur.steps,
    })
}
