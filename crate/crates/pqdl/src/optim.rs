//! Optimizers and the deterministic training loop.
//!
//! Three regimes: Adam at a fixed learning rate, momentum SGD with a cosine
//! schedule, and RMSProp (momentum variant) with a cosine schedule. The
//! learning rate is swept over a fixed candidate set and chosen by the final
//! calibrated cross-entropy on the calibration set. An epoch is always
//! `ceil(full_dataset_size / batch_size)` gradient steps regardless of how
//! small the actual training subset is, so prefix runs remain comparable.

use serde::{Deserialize, Serialize};

use crate::calib::{calib_step, calibrated_xent, refine_temperature, CalibPolicy, Temperature};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{backward_with_plan, forward_with_plan, Batch, Mode, ModelParams, ModelSpec, Plan};
use crate::rng::{Rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    MomentumSgdCosine,
    RmspropCosine,
}

/// Fully resolved optimizer configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    pub learning_rate_candidates: Vec<f64>,
    pub epochs: usize,
    pub momentum: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    /// Mean-square decay for RMSProp.
    pub rms_decay: f64,
}

impl OptimizerSpec {
    /// Adam with fixed learning rates {1e-4, 3e-4, 1e-3}.
    pub fn adam() -> Self {
        OptimizerSpec {
            kind: OptimizerKind::Adam,
            learning_rate_candidates: vec![1e-4, 3e-4, 1e-3],
            epochs: 50,
            momentum: 0.9,
            epsilon: 1e-8,
            batch_size: 256,
            beta1: 0.9,
            beta2: 0.999,
            rms_decay: 0.9,
        }
    }

    /// Momentum SGD, cosine-decayed, candidates log-spaced 1e-4..1e-1.
    pub fn momentum_sgd_cosine() -> Self {
        OptimizerSpec {
            kind: OptimizerKind::MomentumSgdCosine,
            learning_rate_candidates: vec![1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1],
            epochs: 50,
            momentum: 0.9,
            // Recorded for provenance; the classic momentum update itself has
            // no epsilon term.
            epsilon: 1e-4,
            batch_size: 256,
            beta1: 0.9,
            beta2: 0.999,
            rms_decay: 0.9,
        }
    }

    /// RMSProp with momentum 0.9, epsilon 1, cosine-decayed.
    pub fn rmsprop_cosine() -> Self {
        OptimizerSpec {
            kind: OptimizerKind::RmspropCosine,
            learning_rate_candidates: vec![0.03, 0.1, 0.3],
            epochs: 50,
            momentum: 0.9,
            epsilon: 1.0,
            batch_size: 256,
            beta1: 0.9,
            beta2: 0.999,
            rms_decay: 0.9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.learning_rate_candidates.is_empty() {
            return Err(Error::Config("learning rate candidate set is empty".into()));
        }
        if self.learning_rate_candidates.iter().any(|&lr| !(lr > 0.0)) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Epochs are defined against the full dataset: `steps_per_epoch` does not
/// depend on the size of the training subset actually in use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochConvention {
    pub full_dataset_size: usize,
}

impl EpochConvention {
    pub fn steps_per_epoch(&self, batch_size: usize) -> usize {
        self.full_dataset_size.div_ceil(batch_size).max(1)
    }
}

/// Cosine decay from `lr0` at step 0 to 0 at `total_steps`.
pub fn cosine_lr(lr0: f64, step: u64, total_steps: u64) -> f64 {
    if total_steps == 0 {
        return lr0;
    }
    debug_assert!(step <= total_steps);
    lr0 * 0.5 * (1.0 + (std::f64::consts::PI * step as f64 / total_steps as f64).cos())
}

/// Per-parameter optimizer buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub step: u64,
    /// First moment (Adam) or velocity (SGD momentum, RMSProp momentum).
    pub m: ModelParams,
    /// Second moment (Adam) or mean square (RMSProp); unused by SGD.
    pub v: ModelParams,
}

impl OptimState {
    pub fn new(params: &ModelParams) -> Self {
        OptimState {
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }
}

fn grads_finite(grads: &ModelParams) -> bool {
    grads.is_finite()
}

/// One deterministic update. `lr_now` is the already-scheduled rate.
pub fn optimizer_step(
    spec: &OptimizerSpec,
    state: &mut OptimState,
    params: &mut ModelParams,
    grads: &ModelParams,
    lr_now: f64,
) -> Result<()> {
    if !grads_finite(grads) {
        return Err(Error::Train("non-finite gradients".into()));
    }
    let t = state.step + 1;
    match spec.kind {
        OptimizerKind::Adam => {
            let b1 = spec.beta1;
            let b2 = spec.beta2;
            let bias1 = 1.0 - b1.powi(t as i32);
            let bias2 = 1.0 - b2.powi(t as i32);
            for ((p, g), (m, v)) in params
                .layers
                .iter_mut()
                .zip(&grads.layers)
                .zip(state.m.layers.iter_mut().zip(state.v.layers.iter_mut()))
            {
                let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
                    for i in 0..p.len() {
                        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                        let mhat = m[i] / bias1;
                        let vhat = v[i] / bias2;
                        p[i] -= lr_now * mhat / (vhat.sqrt() + spec.epsilon);
                    }
                };
                update(p.w.data_mut(), g.w.data(), m.w.data_mut(), v.w.data_mut());
                update(&mut p.b, &g.b, &mut m.b, &mut v.b);
            }
        }
        OptimizerKind::MomentumSgdCosine => {
            let mu = spec.momentum;
            for ((p, g), m) in params
                .layers
                .iter_mut()
                .zip(&grads.layers)
                .zip(state.m.layers.iter_mut())
            {
                let update = |p: &mut [f64], g: &[f64], m: &mut [f64]| {
                    for i in 0..p.len() {
                        m[i] = mu * m[i] + g[i];
                        p[i] -= lr_now * m[i];
                    }
                };
                update(p.w.data_mut(), g.w.data(), m.w.data_mut());
                update(&mut p.b, &g.b, &mut m.b);
            }
        }
        OptimizerKind::RmspropCosine => {
            let mu = spec.momentum;
            let d = spec.rms_decay;
            for ((p, g), (m, v)) in params
                .layers
                .iter_mut()
                .zip(&grads.layers)
                .zip(state.m.layers.iter_mut().zip(state.v.layers.iter_mut()))
            {
                let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
                    for i in 0..p.len() {
                        v[i] = d * v[i] + (1.0 - d) * g[i] * g[i];
                        m[i] = mu * m[i] + lr_now * g[i] / (v[i] + spec.epsilon).sqrt();
                        p[i] -= m[i];
                    }
                };
                update(p.w.data_mut(), g.w.data(), m.w.data_mut(), v.w.data_mut());
                update(&mut p.b, &g.b, &mut m.b, &mut v.b);
            }
        }
    }
    state.step = t;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRecord {
    pub step: u64,
    pub train_nats: f64,
    pub calib_nats_raw: f64,
    pub calib_nats_cal: f64,
    pub calib_err: f64,
}

/// Outcome of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRun {
    pub params: ModelParams,
    pub temperature: Temperature,
    pub history: Vec<HistoryRecord>,
    pub total_steps: u64,
    pub lr0: f64,
    /// Calibrated calibration-set cross-entropy after final refinement.
    pub final_calib_nats: f64,
    pub final_calib_nats_raw: f64,
    pub final_calib_err: f64,
    /// Gradient-batch examples that belonged to the calibration set. Always
    /// zero; instrumented so tests can assert the no-leakage contract.
    pub leak_count: u64,
}

/// Endless deterministic stream of training indices: a fresh Fisher-Yates
/// shuffle of the subset every pass, batches may straddle passes so they are
/// always full-sized.
struct IndexStream {
    order: Vec<usize>,
    pos: usize,
    pass: u64,
    seed: u64,
    n: usize,
}

impl IndexStream {
    fn new(n: usize, seed: u64) -> Self {
        let mut s = IndexStream {
            order: Vec::new(),
            pos: 0,
            pass: 0,
            seed,
            n,
        };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        self.order = (0..self.n).collect();
        let mut rng = Rng::stream(self.seed, Stream::Shuffle, &[self.pass]);
        rng.shuffle(&mut self.order);
        self.pos = 0;
        self.pass += 1;
    }

    fn next_batch(&mut self, k: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            if self.pos == self.order.len() {
                self.reshuffle();
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// How training decides its step budget and learning-rate trajectory.
enum StepPolicy {
    /// `epochs * steps_per_epoch` steps; cosine decay where the kind wants it.
    Fixed,
    /// Constant rate with stagnation-triggered drops.
    AutoAnneal(AnnealPolicy),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealPolicy {
    /// Consecutive non-improving evaluations before a drop.
    pub patience: usize,
    pub drop_factor: f64,
    /// Terminate once lr has fallen to this fraction of the initial rate.
    pub floor_ratio: f64,
    /// Safety cap on gradient steps.
    pub max_steps: u64,
}

impl Default for AnnealPolicy {
    fn default() -> Self {
        AnnealPolicy {
            patience: 3,
            drop_factor: 10.0,
            floor_ratio: 1e-3,
            max_steps: u64::MAX,
        }
    }
}

fn run_training(
    model_spec: &ModelSpec,
    optim: &OptimizerSpec,
    lr0: f64,
    train_set: &Dataset,
    calib_set: &Dataset,
    convention: &EpochConvention,
    seed: u64,
    policy: &CalibPolicy,
    step_policy: StepPolicy,
) -> Result<TrainRun> {
    optim.validate()?;
    policy.validate()?;
    if train_set.is_empty() {
        return Err(Error::Train("empty training set".into()));
    }
    if calib_set.is_empty() {
        return Err(Error::Train("empty calibration set".into()));
    }
    {
        use std::collections::HashSet;
        let calib_ids: HashSet<u64> = calib_set.ids.iter().copied().collect();
        if train_set.ids.iter().any(|id| calib_ids.contains(id)) {
            return Err(Error::Train(
                "training and calibration sets share examples".into(),
            ));
        }
    }

    let plan = Plan::compile(model_spec)?;
    let mut params = crate::nn::init_params(model_spec, seed)?;
    let mut state = OptimState::new(&params);
    let mut temperature = Temperature::identity();

    let steps_per_epoch = convention.steps_per_epoch(optim.batch_size) as u64;
    let (mut lr_now, max_steps, cosine_total) = match &step_policy {
        StepPolicy::Fixed => {
            let total = optim.epochs as u64 * steps_per_epoch;
            (lr0, total, total)
        }
        StepPolicy::AutoAnneal(a) => (lr0, a.max_steps, 0),
    };

    let mut stream = IndexStream::new(train_set.len(), seed);
    let calib_ids: std::collections::HashSet<u64> = calib_set.ids.iter().copied().collect();
    let calib_full = calib_set.full_batch();

    let mut history = Vec::new();
    let mut leak_count = 0u64;
    let mut calib_counter = 0u64;
    let mut train_nats_acc = 0.0;
    let mut train_nats_n = 0u64;
    let mut step = 0u64;

    // Auto-anneal bookkeeping.
    let mut best_ce = f64::INFINITY;
    let mut stall = 0usize;
    let floor = lr0
        * match &step_policy {
            StepPolicy::AutoAnneal(a) => a.floor_ratio,
            StepPolicy::Fixed => 0.0,
        };

    while step < max_steps {
        let idx = stream.next_batch(optim.batch_size);
        leak_count += idx
            .iter()
            .filter(|&&i| calib_ids.contains(&train_set.ids[i]))
            .count() as u64;
        let batch = train_set.batch_of(&idx);

        let dropout_seed = Rng::stream(seed, Stream::Dropout, &[step]).next_u64();
        // The training objective always runs at T = 1; the temperature only
        // shapes the calibration objective and evaluation.
        let (loss, grads) =
            backward_with_plan(&plan, &params, &batch, 1.0, Mode::Train, dropout_seed)?;
        if matches!(step_policy, StepPolicy::Fixed) {
            lr_now = match optim.kind {
                OptimizerKind::Adam => lr0,
                _ => cosine_lr(lr0, step, cosine_total),
            };
        }
        optimizer_step(optim, &mut state, &mut params, &grads, lr_now)?;
        train_nats_acc += loss;
        train_nats_n += 1;
        step += 1;

        if step % policy.train_steps_per_calib_step as u64 == 0 {
            let k = policy.calib_batch_size.min(calib_set.len());
            let mut rng = Rng::stream(seed, Stream::CalibBatch, &[calib_counter]);
            calib_counter += 1;
            let cidx = rng.sample_indices(calib_set.len(), k);
            let cbatch = calib_set.batch_of(&cidx);
            let logits = forward_with_plan(&plan, &params, &cbatch, Mode::Eval, 0)?;
            temperature = calib_step(&temperature, &logits, &cbatch.labels, policy.calib_lr);
        }

        if step % steps_per_epoch == 0 {
            let cal = eval_batch(&plan, &params, &temperature, &calib_full)?;
            let raw = eval_batch(&plan, &params, &Temperature::identity(), &calib_full)?;
            history.push(HistoryRecord {
                step,
                train_nats: train_nats_acc / train_nats_n.max(1) as f64,
                calib_nats_raw: raw.0,
                calib_nats_cal: cal.0,
                calib_err: cal.1,
            });
            train_nats_acc = 0.0;
            train_nats_n = 0;

            if let StepPolicy::AutoAnneal(a) = &step_policy {
                if cal.0 < best_ce {
                    best_ce = cal.0;
                    stall = 0;
                } else {
                    stall += 1;
                    if stall >= a.patience {
                        lr_now /= a.drop_factor;
                        stall = 0;
                        // "Reached 1/1000th of the initial value" terminates;
                        // the relative slack absorbs the repeated division.
                        if lr_now <= floor * (1.0 + 1e-9) {
                            break;
                        }
                    }
                }
            }
        }
    }

    if step > 0 {
        temperature = refine_temperature(&plan, &params, temperature, &calib_full, policy)?;
    }
    let cal = eval_batch(&plan, &params, &temperature, &calib_full)?;
    let raw = eval_batch(&plan, &params, &Temperature::identity(), &calib_full)?;

    Ok(TrainRun {
        params,
        temperature,
        history,
        total_steps: step,
        lr0,
        final_calib_nats: cal.0,
        final_calib_nats_raw: raw.0,
        final_calib_err: cal.1,
        leak_count,
    })
}

fn eval_batch(
    plan: &Plan,
    params: &ModelParams,
    temperature: &Temperature,
    batch: &Batch,
) -> Result<(f64, f64)> {
    let r = calibrated_xent(plan, params, temperature, batch)?;
    Ok((r.nats_mean, r.error_rate))
}

/// Trains for `epochs * steps_per_epoch` steps at learning rate `lr0`,
/// interleaving temperature calibration, then refines the temperature on the
/// full calibration set. Model gradients never see calibration examples.
#[allow(clippy::too_many_arguments)]
pub fn train(
    model_spec: &ModelSpec,
    optim: &OptimizerSpec,
    lr0: f64,
    train_set: &Dataset,
    calib_set: &Dataset,
    convention: &EpochConvention,
    seed: u64,
    policy: &CalibPolicy,
) -> Result<TrainRun> {
    run_training(
        model_spec,
        optim,
        lr0,
        train_set,
        calib_set,
        convention,
        seed,
        policy,
        StepPolicy::Fixed,
    )
}

/// Trains once per learning-rate candidate and returns the run minimizing
/// the final calibrated calibration cross-entropy. Ties go to the smaller
/// rate.
#[allow(clippy::too_many_arguments)]
pub fn sweep_lr(
    model_spec: &ModelSpec,
    optim: &OptimizerSpec,
    train_set: &Dataset,
    calib_set: &Dataset,
    convention: &EpochConvention,
    seed: u64,
    policy: &CalibPolicy,
) -> Result<(f64, TrainRun)> {
    optim.validate()?;
    let mut candidates = optim.learning_rate_candidates.clone();
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut best: Option<(f64, TrainRun)> = None;
    for lr in candidates {
        let run = train(
            model_spec, optim, lr, train_set, calib_set, convention, seed, policy,
        )?;
        let better = match &best {
            None => true,
            Some((_, b)) => run.final_calib_nats < b.final_calib_nats,
        };
        if better {
            best = Some((lr, run));
        }
    }
    Ok(best.expect("validated non-empty candidates"))
}

/// Constant learning rate with stagnation-triggered drops: every epoch the
/// calibrated cross-entropy is evaluated on the whole calibration set; after
/// `patience` consecutive non-improving evaluations the rate is divided by
/// `drop_factor`, and training stops once it reaches `floor_ratio` of the
/// initial value.
#[allow(clippy::too_many_arguments)]
pub fn train_auto_anneal(
    model_spec: &ModelSpec,
    optim: &OptimizerSpec,
    initial_lr: f64,
    train_set: &Dataset,
    calib_set: &Dataset,
    convention: &EpochConvention,
    seed: u64,
    policy: &CalibPolicy,
    anneal: &AnnealPolicy,
) -> Result<TrainRun> {
    if !(anneal.drop_factor > 1.0) || !(anneal.floor_ratio > 0.0 && anneal.floor_ratio < 1.0) {
        return Err(Error::Config(
            "anneal policy requires drop_factor > 1 and floor_ratio in (0,1)".into(),
        ));
    }
    run_training(
        model_spec,
        optim,
        initial_lr,
        train_set,
        calib_set,
        convention,
        seed,
        policy,
        StepPolicy::AutoAnneal(*anneal),
    )
}

/// A complete, reproducible training procedure: optimizer with its
/// learning-rate sweep, calibration policy, and the epoch convention. This is
/// the trainable half of a coding procedure; the prequential walk re-runs it
/// from scratch for every prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecipe {
    pub optimizer: OptimizerSpec,
    pub calib: CalibPolicy,
    pub convention: EpochConvention,
}

impl TrainingRecipe {
    /// Sweep + train + refine; the receiver side of the codec calls exactly
    /// this with the same arguments.
    pub fn fit(
        &self,
        model_spec: &ModelSpec,
        train_set: &Dataset,
        calib_set: &Dataset,
        seed: u64,
    ) -> Result<(f64, TrainRun)> {
        sweep_lr(
            model_spec,
            &self.optimizer,
            train_set,
            calib_set,
            &self.convention,
            seed,
            &self.calib,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{split_train_calib, synth_mixture, SplitSpec};
    use crate::matrix::Matrix;
    use crate::nn::init_params;

    #[test]
    fn cosine_schedule_endpoints_and_midpoint() {
        assert_eq!(cosine_lr(0.1, 0, 100), 0.1);
        assert!(cosine_lr(0.1, 100, 100).abs() < 1e-17);
        assert!((cosine_lr(0.1, 50, 100) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn cosine_schedule_is_non_increasing() {
        let mut last = f64::INFINITY;
        for step in 0..=200 {
            let lr = cosine_lr(0.3, step, 200);
            assert!(lr <= last + 1e-18);
            last = lr;
        }
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        let spec = ModelSpec::logistic(3, 2);
        let mut params = init_params(&spec, 0).unwrap().zeros_like();
        let mut grads = params.zeros_like();
        for g in grads.layers[0].w.data_mut() {
            *g = 0.37;
        }
        for g in &mut grads.layers[0].b {
            *g = -2.1;
        }
        let optim = OptimizerSpec::adam();
        let mut state = OptimState::new(&params);
        optimizer_step(&optim, &mut state, &mut params, &grads, 1e-3).unwrap();
        for &w in params.layers[0].w.data() {
            assert!((w - (-1e-3)).abs() < 1e-6, "{w}");
        }
        for &b in &params.layers[0].b {
            assert!((b - 1e-3).abs() < 1e-6, "{b}");
        }
    }

    #[test]
    fn zero_momentum_sgd_is_vanilla() {
        let spec = ModelSpec::logistic(2, 2);
        let mut params = init_params(&spec, 1).unwrap();
        let before = params.clone();
        let mut grads = params.zeros_like();
        grads.layers[0].w = Matrix::from_vec(2, 2, vec![1.0, -2.0, 0.5, 4.0]).unwrap();
        grads.layers[0].b = vec![0.25, -0.5];
        let mut optim = OptimizerSpec::momentum_sgd_cosine();
        optim.momentum = 0.0;
        let mut state = OptimState::new(&params);
        optimizer_step(&optim, &mut state, &mut params, &grads, 0.1).unwrap();
        for i in 0..4 {
            let expected = before.layers[0].w.data()[i] - 0.1 * grads.layers[0].w.data()[i];
            assert!((params.layers[0].w.data()[i] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn non_finite_gradients_error() {
        let spec = ModelSpec::logistic(2, 2);
        let mut params = init_params(&spec, 1).unwrap();
        let mut grads = params.zeros_like();
        grads.layers[0].b[0] = f64::NAN;
        let optim = OptimizerSpec::adam();
        let mut state = OptimState::new(&params);
        assert!(matches!(
            optimizer_step(&optim, &mut state, &mut params, &grads, 0.1),
            Err(Error::Train(_))
        ));
    }

    fn quick_setup(
        separation: f64,
        per_class: usize,
        seed: u64,
    ) -> (Dataset, Dataset, EpochConvention) {
        let ds = synth_mixture(2, 4, per_class, separation, seed).unwrap();
        let n = ds.len();
        let (train, calib) = split_train_calib(&ds, &SplitSpec { calib_fraction: 0.1, seed }).unwrap();
        (train, calib, EpochConvention { full_dataset_size: n })
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let (train_set, calib_set, conv) = quick_setup(5.0, 32, 3);
        let spec = ModelSpec::mlp(4, 2, 8, 1);
        let mut optim = OptimizerSpec::adam();
        optim.epochs = 0;
        optim.batch_size = 16;
        let run = train(
            &spec, &optim, 1e-3, &train_set, &calib_set, &conv, 7, &CalibPolicy::default(),
        )
        .unwrap();
        assert_eq!(run.total_steps, 0);
        assert_eq!(run.params, init_params(&spec, 7).unwrap());
        assert_eq!(run.temperature, Temperature::identity());
        assert!(run.history.is_empty());
    }

    #[test]
    fn separable_blob_reaches_zero_calibration_error() {
        let (train_set, calib_set, conv) = quick_setup(10.0, 64, 4);
        let spec = ModelSpec::mlp(4, 2, 16, 1);
        let mut optim = OptimizerSpec::adam();
        optim.epochs = 50;
        optim.batch_size = 32;
        let run = train(
            &spec, &optim, 1e-3, &train_set, &calib_set, &conv, 5, &CalibPolicy::default(),
        )
        .unwrap();
        assert_eq!(run.final_calib_err, 0.0);
        assert_eq!(run.leak_count, 0);
    }

    #[test]
    fn training_is_deterministic() {
        let (train_set, calib_set, conv) = quick_setup(3.0, 32, 5);
        let spec = ModelSpec::mlp_dropout(4, 2, 8, 1, 0.2);
        let mut optim = OptimizerSpec::adam();
        optim.epochs = 5;
        optim.batch_size = 16;
        let a = train(
            &spec, &optim, 3e-4, &train_set, &calib_set, &conv, 11, &CalibPolicy::default(),
        )
        .unwrap();
        let b = train(
            &spec, &optim, 3e-4, &train_set, &calib_set, &conv, 11, &CalibPolicy::default(),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn history_steps_increase() {
        let (train_set, calib_set, conv) = quick_setup(3.0, 32, 6);
        let spec = ModelSpec::logistic(4, 2);
        let mut optim = OptimizerSpec::adam();
        optim.epochs = 4;
        optim.batch_size = 16;
        let run = train(
            &spec, &optim, 1e-3, &train_set, &calib_set, &conv, 2, &CalibPolicy::default(),
        )
        .unwrap();
        assert_eq!(run.history.len(), 4);
        for w in run.history.windows(2) {
            assert!(w[1].step > w[0].step);
        }
    }

    #[test]
    fn sweep_picks_argmin_of_independent_runs() {
        let (train_set, calib_set, conv) = quick_setup(4.0, 32, 7);
        let spec = ModelSpec::mlp(4, 2, 8, 1);
        let mut optim = OptimizerSpec::adam();
        optim.epochs = 6;
        optim.batch_size = 16;
        let policy = CalibPolicy::default();
        let (best_lr, best_run) = sweep_lr(
            &spec, &optim, &train_set, &calib_set, &conv, 3, &policy,
        )
        .unwrap();
        // Re-run each candidate independently and compare.
        let mut best_manual: Option<(f64, f64)> = None;
        for &lr in &optim.learning_rate_candidates {
            let run = train(
                &spec, &optim, lr, &train_set, &calib_set, &conv, 3, &policy,
            )
            .unwrap();
            let better = match best_manual {
                None => true,
                Some((_, nats)) => run.final_calib_nats < nats,
            };
            if better {
                best_manual = Some((lr, run.final_calib_nats));
            }
        }
        let (manual_lr, manual_nats) = best_manual.unwrap();
        assert_eq!(best_lr, manual_lr);
        assert_eq!(best_run.final_calib_nats, manual_nats);
    }

    #[test]
    fn sweep_single_candidate_returns_it() {
        let (train_set, calib_set, conv) = quick_setup(4.0, 16, 8);
        let spec = ModelSpec::logistic(4, 2);
        let mut optim = OptimizerSpec::adam();
        optim.learning_rate_candidates = vec![5e-4];
        optim.epochs = 2;
        optim.batch_size = 16;
        let (lr, _) = sweep_lr(
            &spec, &optim, &train_set, &calib_set, &conv, 1, &CalibPolicy::default(),
        )
        .unwrap();
        assert_eq!(lr, 5e-4);
    }

    #[test]
    fn sweep_duplicate_candidates_tie_to_first() {
        let (train_set, calib_set, conv) = quick_setup(4.0, 16, 9);
        let spec = ModelSpec::logistic(4, 2);
        let mut optim = OptimizerSpec::adam();
        optim.learning_rate_candidates = vec![5e-4, 5e-4];
        optim.epochs = 2;
        optim.batch_size = 16;
        let (lr, _) = sweep_lr(
            &spec, &optim, &train_set, &calib_set, &conv, 1, &CalibPolicy::default(),
        )
        .unwrap();
        assert_eq!(lr, 5e-4);
    }

    /// Zero inputs + balanced labels on logistic regression give exactly zero
    /// gradients: the frozen-model scenario for annealing.
    fn frozen_setup() -> (Dataset, Dataset, EpochConvention) {
        use crate::nn::InputShape;
        let n = 32;
        let examples = Matrix::zeros(n, 2);
        let labels: Vec<u32> = (0..n).map(|i| (i % 2) as u32).collect();
        let ds = Dataset::new("frozen", examples, labels, 2, InputShape::Flat(2), "test").unwrap();
        let idx_train: Vec<usize> = (0..16).collect();
        let idx_calib: Vec<usize> = (16..32).collect();
        (
            ds.subset(&idx_train),
            ds.subset(&idx_calib),
            EpochConvention { full_dataset_size: 16 },
        )
    }

    #[test]
    fn auto_anneal_drops_and_terminates_on_stagnation() {
        let (train_set, calib_set, conv) = frozen_setup();
        let spec = ModelSpec::logistic(2, 2);
        let mut optim = OptimizerSpec::momentum_sgd_cosine();
        optim.batch_size = 16;
        let anneal = AnnealPolicy::default();
        let run = train_auto_anneal(
            &spec, &optim, 0.1, &train_set, &calib_set, &conv, 3,
            &CalibPolicy::default(), &anneal,
        )
        .unwrap();
        // Eval 1 improves over +inf; then each drop needs `patience`
        // stagnant evals; 3 drops of 10x reach the 1/1000 floor.
        let spe = conv.steps_per_epoch(16) as u64;
        assert_eq!(run.total_steps, (1 + 3 * 3) * spe);
    }

    #[test]
    fn auto_anneal_runs_to_cap_when_improving() {
        let (train_set, calib_set, conv) = quick_setup(3.0, 64, 10);
        let spec = ModelSpec::mlp(4, 2, 8, 1);
        let mut optim = OptimizerSpec::adam();
        optim.batch_size = 16;
        let anneal = AnnealPolicy {
            max_steps: 3 * conv.steps_per_epoch(16) as u64,
            ..AnnealPolicy::default()
        };
        let run = train_auto_anneal(
            &spec, &optim, 1e-3, &train_set, &calib_set, &conv, 3,
            &CalibPolicy::default(), &anneal,
        )
        .unwrap();
        assert_eq!(run.total_steps, anneal.max_steps);
    }
}
