//! Forward and backward passes.
//!
//! Backward is exact manual backpropagation of the mean softmax
//! cross-entropy at a given temperature. Dropout masks are regenerated from
//! the same derived stream in both passes, so gradients always match the
//! forward pass that produced the loss.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{Rng, Stream};

use super::{Activation, Batch, ModelParams, ModelSpec, Plan, PlanStep};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

fn apply_activation(m: &mut Matrix, act: Activation) {
    match act {
        Activation::Relu => m.map_in_place(|x| if x > 0.0 { x } else { 0.0 }),
        Activation::Tanh => m.map_in_place(f64::tanh),
        Activation::None => {}
    }
}

/// d(activation)/dz expressed through the activation output.
#[inline]
fn activation_grad_from_output(y: f64, act: Activation) -> f64 {
    match act {
        Activation::Relu => {
            if y > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Activation::Tanh => 1.0 - y * y,
        Activation::None => 1.0,
    }
}

/// Inverted-dropout mask: entries are `1/(1-rate)` with probability
/// `1-rate`, else 0. The stream is keyed on the layer's dropout index so
/// masks stay stable regardless of how much randomness other layers consume.
fn dropout_mask(rows: usize, cols: usize, rate: f64, dropout_seed: u64, dropout_idx: usize) -> Matrix {
    let mut rng = Rng::stream(dropout_seed, Stream::Dropout, &[dropout_idx as u64]);
    let keep_scale = 1.0 / (1.0 - rate);
    let mut mask = Matrix::zeros(rows, cols);
    for x in mask.data_mut() {
        *x = if rng.next_f64() >= rate { keep_scale } else { 0.0 };
    }
    mask
}

struct Trace {
    /// Input to each plan step, in example-row layout.
    inputs: Vec<Matrix>,
    /// Activation outputs per step (shared with `inputs` of the next step).
    /// im2col patches per conv step, indexed by step.
    patches: Vec<Option<Matrix>>,
}

fn check_batch(plan: &Plan, batch: &Batch) -> Result<()> {
    if batch.inputs.cols() != plan.input_dim {
        return Err(Error::Shape(format!(
            "batch input dim {} != model input dim {}",
            batch.inputs.cols(),
            plan.input_dim
        )));
    }
    if batch.inputs.rows() != batch.labels.len() {
        return Err(Error::Shape("batch rows != labels".into()));
    }
    if let Some(&l) = batch.labels.iter().find(|&&l| l as usize >= plan.num_classes) {
        return Err(Error::Shape(format!(
            "label {} out of range for {} classes",
            l, plan.num_classes
        )));
    }
    Ok(())
}

fn run_forward(
    plan: &Plan,
    params: &ModelParams,
    batch: &Batch,
    mode: Mode,
    dropout_seed: u64,
    want_trace: bool,
) -> Result<(Matrix, Option<Trace>)> {
    check_batch(plan, batch)?;
    if params.layers.len() != plan.param_shapes.len() {
        return Err(Error::Shape(format!(
            "params have {} layers, plan expects {}",
            params.layers.len(),
            plan.param_shapes.len()
        )));
    }
    for (i, (&(fi, fo), l)) in plan.param_shapes.iter().zip(&params.layers).enumerate() {
        if l.w.rows() != fi || l.w.cols() != fo || l.b.len() != fo {
            return Err(Error::Shape(format!(
                "layer {i}: params {}x{} (+{} bias) do not match plan {fi}x{fo}",
                l.w.rows(),
                l.w.cols(),
                l.b.len()
            )));
        }
    }

    let batch_size = batch.inputs.rows();
    let mut trace = Trace {
        inputs: Vec::new(),
        patches: vec![None; plan.steps.len()],
    };
    let mut cur = batch.inputs.clone();

    for (step_idx, step) in plan.steps.iter().enumerate() {
        if want_trace {
            trace.inputs.push(cur.clone());
        }
        match step {
            PlanStep::Dense {
                param_idx,
                activation,
            } => {
                let lp = &params.layers[*param_idx];
                let mut z = cur.matmul(&lp.w);
                z.add_row_bias(&lp.b);
                apply_activation(&mut z, *activation);
                cur = z;
            }
            PlanStep::Conv {
                param_idx,
                activation,
                geom,
            } => {
                let lp = &params.layers[*param_idx];
                let patches = geom.im2col(&cur);
                let mut z = patches.matmul(&lp.w);
                z.add_row_bias(&lp.b);
                apply_activation(&mut z, *activation);
                cur = geom.rows_to_images(&z, batch_size);
                if want_trace {
                    trace.patches[step_idx] = Some(patches);
                }
            }
            PlanStep::Dropout { rate, dropout_idx } => {
                if mode == Mode::Train && *rate > 0.0 {
                    let mask = dropout_mask(cur.rows(), cur.cols(), *rate, dropout_seed, *dropout_idx);
                    for (x, &m) in cur.data_mut().iter_mut().zip(mask.data()) {
                        *x *= m;
                    }
                }
            }
            PlanStep::Flatten => {}
        }
    }

    if want_trace {
        trace.inputs.push(cur.clone());
    }
    Ok((cur, if want_trace { Some(trace) } else { None }))
}

/// Runs the model on a batch and returns the logits
/// (`batch x num_classes`). In eval mode dropout is the identity.
pub fn forward(
    spec: &ModelSpec,
    params: &ModelParams,
    batch: &Batch,
    mode: Mode,
    dropout_seed: u64,
) -> Result<Matrix> {
    let plan = Plan::compile(spec)?;
    forward_with_plan(&plan, params, batch, mode, dropout_seed)
}

/// Same as [`forward`] for callers that already compiled the plan (the
/// training loop calls this once per gradient step).
pub fn forward_with_plan(
    plan: &Plan,
    params: &ModelParams,
    batch: &Batch,
    mode: Mode,
    dropout_seed: u64,
) -> Result<Matrix> {
    run_forward(plan, params, batch, mode, dropout_seed, false).map(|(logits, _)| logits)
}

/// Softmax cross-entropy at temperature `t`: probabilities are
/// `softmax(logits / t)` row-wise and the loss is the mean of
/// `-ln p[label]` over the batch, in nats.
pub fn softmax_xent(logits: &Matrix, labels: &[u32], temperature: f64) -> Result<(f64, Matrix)> {
    if temperature <= 0.0 || !temperature.is_finite() {
        return Err(Error::Config(format!(
            "temperature must be positive and finite, got {temperature}"
        )));
    }
    if logits.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} logit rows vs {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    let mut probs = Matrix::zeros(logits.rows(), logits.cols());
    let mut total = 0.0;
    for r in 0..logits.rows() {
        let row = logits.row(r);
        let mut max = f64::NEG_INFINITY;
        for &x in row {
            let v = x / temperature;
            if v > max {
                max = v;
            }
        }
        let mut denom = 0.0;
        let out = probs.row_mut(r);
        for (o, &x) in out.iter_mut().zip(row) {
            let e = ((x / temperature) - max).exp();
            *o = e;
            denom += e;
        }
        for o in out.iter_mut() {
            *o /= denom;
        }
        let label = labels[r] as usize;
        // -ln p computed from the normalized entry; p > 0 because the label's
        // own exponential contributes to the denominator.
        total += -(out[label].ln());
    }
    Ok((total / logits.rows() as f64, probs))
}

/// Backpropagates the mean cross-entropy at `temperature` through the model.
/// Returns the loss and gradients shaped exactly like `params`. The same
/// `dropout_seed` must be passed as in the paired forward; masks are
/// regenerated, not stored.
pub fn backward(
    spec: &ModelSpec,
    params: &ModelParams,
    batch: &Batch,
    temperature: f64,
    mode: Mode,
    dropout_seed: u64,
) -> Result<(f64, ModelParams)> {
    let plan = Plan::compile(spec)?;
    backward_with_plan(&plan, params, batch, temperature, mode, dropout_seed)
}

pub fn backward_with_plan(
    plan: &Plan,
    params: &ModelParams,
    batch: &Batch,
    temperature: f64,
    mode: Mode,
    dropout_seed: u64,
) -> Result<(f64, ModelParams)> {
    let (logits, trace) = run_forward(plan, params, batch, mode, dropout_seed, true)?;
    let trace = trace.expect("trace requested");
    let (loss, probs) = softmax_xent(&logits, &batch.labels, temperature)?;

    let batch_size = batch.len() as f64;
    // d(mean loss)/d(logits) = (p - onehot) / (T * batch).
    let mut upstream = probs;
    for r in 0..upstream.rows() {
        let label = batch.labels[r] as usize;
        let row = upstream.row_mut(r);
        row[label] -= 1.0;
        for x in row.iter_mut() {
            *x /= temperature * batch_size;
        }
    }

    let mut grads = params.zeros_like();

    for (step_idx, step) in plan.steps.iter().enumerate().rev() {
        match step {
            PlanStep::Dense {
                param_idx,
                activation,
            } => {
                let lp = &params.layers[*param_idx];
                let input = &trace.inputs[step_idx];
                let output = &trace.inputs[step_idx + 1];
                // dz = upstream ⊙ act'(output)
                let mut dz = upstream;
                for (d, &y) in dz.data_mut().iter_mut().zip(output.data()) {
                    *d *= activation_grad_from_output(y, *activation);
                }
                grads.layers[*param_idx].w = input.transpose_matmul(&dz);
                grads.layers[*param_idx].b = dz.col_sums();
                upstream = dz.matmul_transpose(&lp.w);
            }
            PlanStep::Conv {
                param_idx,
                activation,
                geom,
            } => {
                let lp = &params.layers[*param_idx];
                let output = &trace.inputs[step_idx + 1];
                let patches = trace.patches[step_idx].as_ref().expect("conv patches traced");
                let mut dz = geom.images_to_rows(&upstream);
                let out_rows = geom.images_to_rows(output);
                for (d, &y) in dz.data_mut().iter_mut().zip(out_rows.data()) {
                    *d *= activation_grad_from_output(y, *activation);
                }
                grads.layers[*param_idx].w = patches.transpose_matmul(&dz);
                grads.layers[*param_idx].b = dz.col_sums();
                let d_patches = dz.matmul_transpose(&lp.w);
                upstream = geom.col2im(&d_patches, batch.len());
            }
            PlanStep::Dropout { rate, dropout_idx } => {
                if mode == Mode::Train && *rate > 0.0 {
                    let mask = dropout_mask(
                        upstream.rows(),
                        upstream.cols(),
                        *rate,
                        dropout_seed,
                        *dropout_idx,
                    );
                    for (x, &m) in upstream.data_mut().iter_mut().zip(mask.data()) {
                        *x *= m;
                    }
                }
            }
            PlanStep::Flatten => {}
        }
    }

    Ok((loss, grads))
}
