//! Prequential description-length estimation.
//!
//! Labels are transmitted block by block. The first block is coded under the
//! uniform distribution over classes; every later block is coded under the
//! calibrated predictions of a model trained from scratch on the prefix of
//! previously transmitted examples (with its own train/calibration split,
//! learning-rate sweep and temperature refinement). The total code length in
//! nats is the description length of the dataset under that model and
//! training procedure; differences between models are log Bayes factors.

use serde::{Deserialize, Serialize};

use crate::calib::{calibrated_probs, Temperature};
use crate::data::{make_prefix_chain, split_train_calib, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{forward_with_plan, Batch, Mode, ModelParams, ModelSpec, Plan};
use crate::optim::TrainingRecipe;
use crate::rng::{Rng, Stream};

/// Floor mixed into every predictive distribution before coding:
/// `p' = (1 - K*eps) * p + eps`. Bounds the worst-case per-label cost and
/// keeps every quantized frequency at least 1.
pub const PROB_FLOOR: f64 = 1.0 / 65536.0;

/// Applies the floor in place. Requires `K * PROB_FLOOR < 1`.
pub fn floor_probs(probs: &mut [f64]) {
    let k = probs.len() as f64;
    let scale = 1.0 - k * PROB_FLOOR;
    for p in probs.iter_mut() {
        *p = scale * *p + PROB_FLOOR;
    }
}

/// Block boundaries `n_0 < n_1 < ... < n_B = N`. Block 0 covers the first
/// `n_0` examples (coded uniformly); block `b` covers the examples between
/// `n_{b-1}` and `n_b`, coded by a model trained on the first `n_{b-1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSchedule {
    pub boundaries: Vec<usize>,
}

impl BlockSchedule {
    pub fn new(boundaries: Vec<usize>, dataset_size: usize) -> Result<BlockSchedule> {
        if boundaries.is_empty() {
            return Err(Error::Config("schedule needs at least one boundary".into()));
        }
        if boundaries[0] == 0 {
            return Err(Error::Config("first block must be non-empty".into()));
        }
        for w in boundaries.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Config(format!(
                    "schedule boundaries must be strictly increasing: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if *boundaries.last().unwrap() != dataset_size {
            return Err(Error::Config(format!(
                "last boundary {} must equal the dataset size {}",
                boundaries.last().unwrap(),
                dataset_size
            )));
        }
        Ok(BlockSchedule { boundaries })
    }

    /// Default schedule: first block of `2K` examples, then boundaries
    /// doubling until the dataset is covered.
    pub fn geometric(num_classes: usize, dataset_size: usize) -> Result<BlockSchedule> {
        let mut boundaries = Vec::new();
        let mut b = (2 * num_classes).min(dataset_size);
        loop {
            boundaries.push(b);
            if b == dataset_size {
                break;
            }
            b = (b * 2).min(dataset_size);
        }
        BlockSchedule::new(boundaries, dataset_size)
    }

    /// Halved resolution: every other boundary, always keeping the last.
    /// This is the "vary the number of points" uncertainty probe.
    pub fn coarsened(&self) -> BlockSchedule {
        let last = *self.boundaries.last().unwrap();
        let mut boundaries: Vec<usize> = self.boundaries.iter().copied().step_by(2).collect();
        if *boundaries.last().unwrap() != last {
            boundaries.push(last);
        }
        BlockSchedule { boundaries }
    }

    pub fn num_blocks(&self) -> usize {
        self.boundaries.len()
    }
}

/// One coded label.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerEntry {
    pub block: usize,
    /// Prefix size the coding model was trained on; 0 for the uniform block.
    pub trained_on: usize,
    /// Index of the example in the underlying dataset.
    pub example_index: usize,
    pub nats: f64,
}

/// Complete record of one prequential pass.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeLedger {
    pub model_name: String,
    pub dataset_name: String,
    pub schedule: Vec<usize>,
    pub seed: u64,
    pub entries: Vec<LedgerEntry>,
    /// Sum of all entries, accumulated in ledger order.
    pub total_nats: f64,
    pub block_totals: Vec<f64>,
    pub block_mean_nats: Vec<f64>,
    /// Hash of the trained parameters per non-uniform block.
    pub param_hashes: Vec<u64>,
    pub chosen_lrs: Vec<f64>,
}

/// A model fitted on a prefix, ready to code the next block.
pub struct PrefixModel {
    pub plan: Plan,
    pub params: ModelParams,
    pub temperature: Temperature,
    pub chosen_lr: f64,
    pub param_hash: u64,
}

/// Runs the full training recipe on a prefix: derive the train/calibration
/// split from the transmitted data, sweep the learning rate by calibration
/// loss, train, refine the temperature. Deterministic in
/// `(spec, recipe, prefix, seed)`; both codec sides call exactly this.
pub fn fit_prefix(
    model_spec: &ModelSpec,
    recipe: &TrainingRecipe,
    prefix: &Dataset,
    calib_fraction: f64,
    seed: u64,
) -> Result<PrefixModel> {
    let split = SplitSpec {
        calib_fraction,
        seed,
    };
    let (train_set, calib_set) = split_train_calib(prefix, &split)?;
    let block_seed = Rng::stream(seed, Stream::Block, &[prefix.len() as u64]).next_u64();
    let (lr, run) = recipe.fit(model_spec, &train_set, &calib_set, block_seed)?;
    let plan = Plan::compile(model_spec)?;
    // The hash covers weights and temperature: everything the code
    // distribution depends on.
    let param_hash =
        run.params.hash() ^ crate::rng::fnv1a(&run.temperature.log_t.to_bits().to_le_bytes());
    Ok(PrefixModel {
        plan,
        params: run.params,
        temperature: run.temperature,
        chosen_lr: lr,
        param_hash,
    })
}

/// Floored calibrated predictive distributions for a batch of inputs,
/// one row per example.
pub fn predictive_distributions(model: &PrefixModel, batch: &Batch) -> Result<Matrix> {
    let logits = forward_with_plan(&model.plan, &model.params, batch, Mode::Eval, 0)?;
    let mut probs = calibrated_probs(&logits, &model.temperature);
    for r in 0..probs.rows() {
        floor_probs(probs.row_mut(r));
    }
    Ok(probs)
}

/// Uniform (floored) distribution over `k` classes. The floor is a no-op on
/// the uniform distribution.
pub fn uniform_distribution(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}

/// One prequential pass over the dataset for one seed.
pub fn prequential_run(
    model_name: &str,
    model_spec: &ModelSpec,
    recipe: &TrainingRecipe,
    dataset: &Dataset,
    schedule: &BlockSchedule,
    calib_fraction: f64,
    seed: u64,
) -> Result<CodeLedger> {
    if dataset.num_classes as f64 * PROB_FLOOR >= 1.0 {
        return Err(Error::Config(format!(
            "{} classes is too many for the probability floor",
            dataset.num_classes
        )));
    }
    let chain = make_prefix_chain(dataset, &schedule.boundaries, seed)?;
    let k = dataset.num_classes;
    let ln_k = (k as f64).ln();

    let mut entries = Vec::with_capacity(dataset.len());
    let mut block_totals = Vec::with_capacity(schedule.num_blocks());
    let mut block_mean_nats = Vec::with_capacity(schedule.num_blocks());
    let mut param_hashes = Vec::new();
    let mut chosen_lrs = Vec::new();

    // Block 0: uniform code.
    let n0 = schedule.boundaries[0];
    let mut block_total = 0.0;
    for &example in chain.subset_indices(n0) {
        entries.push(LedgerEntry {
            block: 0,
            trained_on: 0,
            example_index: example,
            nats: ln_k,
        });
        block_total += ln_k;
    }
    block_totals.push(block_total);
    block_mean_nats.push(block_total / n0 as f64);

    for b in 1..schedule.num_blocks() {
        let n_prev = schedule.boundaries[b - 1];
        let n_cur = schedule.boundaries[b];
        let prefix = dataset.subset(chain.subset_indices(n_prev));
        let model = fit_prefix(model_spec, recipe, &prefix, calib_fraction, seed)?;
        param_hashes.push(model.param_hash);
        chosen_lrs.push(model.chosen_lr);

        let added = chain.added_indices(n_prev, n_cur);
        let batch = dataset.batch_of(added);
        let probs = predictive_distributions(&model, &batch)?;

        let mut block_total = 0.0;
        for (row, &example) in added.iter().enumerate() {
            let p = probs.get(row, dataset.labels[example] as usize);
            let nats = -p.ln();
            if !nats.is_finite() {
                return Err(Error::Train(format!(
                    "non-finite code length for example {example}"
                )));
            }
            entries.push(LedgerEntry {
                block: b,
                trained_on: n_prev,
                example_index: example,
                nats,
            });
            block_total += nats;
        }
        block_totals.push(block_total);
        block_mean_nats.push(block_total / (n_cur - n_prev) as f64);
    }

    let mut total_nats = 0.0;
    for e in &entries {
        total_nats += e.nats;
    }

    Ok(CodeLedger {
        model_name: model_name.to_string(),
        dataset_name: dataset.name.clone(),
        schedule: schedule.boundaries.clone(),
        seed,
        entries,
        total_nats,
        block_totals,
        block_mean_nats,
        param_hashes,
        chosen_lrs,
    })
}

/// Description-length estimate with its uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DLEstimate {
    pub model_name: String,
    pub dataset_name: String,
    pub schedule: Vec<usize>,
    /// Mean over seed replicates, full-resolution schedule.
    pub dl_nats: f64,
    pub per_seed: Vec<f64>,
    pub seed_std: f64,
    /// Spread between the full and the coarsened schedule.
    pub schedule_std: f64,
    /// Quadrature combination of the two spreads.
    pub uncertainty: f64,
}

fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() - 1) as f64;
    var.sqrt()
}

/// Combines per-seed totals (full-resolution schedule) and an optional
/// coarse-schedule total into `(dl_nats, seed_std, schedule_std,
/// uncertainty)`.
pub fn combine_replicates(per_seed: &[f64], coarse: Option<f64>) -> (f64, f64, f64, f64) {
    let dl_nats = per_seed.iter().sum::<f64>() / per_seed.len() as f64;
    let seed_std = sample_std(per_seed);
    let schedule_std = match coarse {
        Some(c) => sample_std(&[per_seed[0], c]),
        None => 0.0,
    };
    let uncertainty = (seed_std * seed_std + schedule_std * schedule_std).sqrt();
    (dl_nats, seed_std, schedule_std, uncertainty)
}

/// Replicated estimate: one full-resolution run per seed plus one
/// coarsened-schedule run on the first seed; seed spread and schedule spread
/// combine in quadrature.
#[allow(clippy::too_many_arguments)]
pub fn prequential_dl(
    model_name: &str,
    model_spec: &ModelSpec,
    recipe: &TrainingRecipe,
    dataset: &Dataset,
    schedule: &BlockSchedule,
    calib_fraction: f64,
    seeds: &[u64],
) -> Result<(DLEstimate, Vec<CodeLedger>)> {
    if seeds.is_empty() {
        return Err(Error::Config("need at least one seed".into()));
    }
    let mut ledgers = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        ledgers.push(prequential_run(
            model_name,
            model_spec,
            recipe,
            dataset,
            schedule,
            calib_fraction,
            seed,
        )?);
    }
    let per_seed: Vec<f64> = ledgers.iter().map(|l| l.total_nats).collect();

    let coarse = schedule.coarsened();
    let coarse_total = if coarse.boundaries != schedule.boundaries {
        Some(
            prequential_run(
                model_name,
                model_spec,
                recipe,
                dataset,
                &coarse,
                calib_fraction,
                seeds[0],
            )?
            .total_nats,
        )
    } else {
        None
    };
    let (dl_nats, seed_std, schedule_std, uncertainty) =
        combine_replicates(&per_seed, coarse_total);

    let estimate = DLEstimate {
        model_name: model_name.to_string(),
        dataset_name: dataset.name.clone(),
        schedule: schedule.boundaries.clone(),
        dl_nats,
        per_seed,
        seed_std,
        schedule_std,
        uncertainty,
    };
    Ok((estimate, ledgers))
}

/// Trapezoid approximation of the description length from a generalization
/// curve: points `(n_i, per-example nats at prefix n_i)` with `n` strictly
/// increasing. The first `n_0` examples are charged the uniform cost.
pub fn auc_dl(num_classes: usize, curve: &[(usize, f64)]) -> Result<f64> {
    if curve.is_empty() {
        return Err(Error::Config("empty curve".into()));
    }
    for w in curve.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(Error::Config(format!(
                "curve prefix sizes must be strictly increasing: {} then {}",
                w[0].0, w[1].0
            )));
        }
    }
    let mut dl = curve[0].0 as f64 * (num_classes as f64).ln();
    for w in curve.windows(2) {
        let (n0, l0) = w[0];
        let (n1, l1) = w[1];
        dl += 0.5 * (l0 + l1) * (n1 - n0) as f64;
    }
    Ok(dl)
}

/// Pairwise description-length differences with combined uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceTable {
    pub dataset_name: String,
    pub models: Vec<String>,
    /// `delta[i][j] = DL(model_i) - DL(model_j)` in nats.
    pub delta: Vec<Vec<f64>>,
    /// Quadrature-combined uncertainty per cell.
    pub uncertainty: Vec<Vec<f64>>,
}

pub fn evidence_table(estimates: &[DLEstimate]) -> Result<EvidenceTable> {
    if estimates.len() < 2 {
        return Err(Error::Config("evidence table needs at least 2 estimates".into()));
    }
    let dataset = &estimates[0].dataset_name;
    let schedule = &estimates[0].schedule;
    for e in estimates {
        if &e.dataset_name != dataset {
            return Err(Error::Config(format!(
                "mismatched datasets: {} vs {}",
                dataset, e.dataset_name
            )));
        }
        if &e.schedule != schedule {
            return Err(Error::Config(format!(
                "mismatched schedules for {} and {}",
                estimates[0].model_name, e.model_name
            )));
        }
    }
    let n = estimates.len();
    let mut delta = vec![vec![0.0; n]; n];
    let mut uncertainty = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            delta[i][j] = estimates[i].dl_nats - estimates[j].dl_nats;
            uncertainty[i][j] = (estimates[i].uncertainty * estimates[i].uncertainty
                + estimates[j].uncertainty * estimates[j].uncertainty)
                .sqrt();
        }
    }
    Ok(EvidenceTable {
        dataset_name: dataset.clone(),
        models: estimates.iter().map(|e| e.model_name.clone()).collect(),
        delta,
        uncertainty,
    })
}

/// Converts a nats difference into decimal orders of evidence, staying in
/// the log domain.
pub fn log10_bayes_factor(delta_nats: f64) -> f64 {
    delta_nats / std::f64::consts::LN_10
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calib::CalibPolicy;
    use crate::data::synth_mixture;
    use crate::optim::{EpochConvention, OptimizerSpec};

    fn quick_recipe(full_size: usize) -> TrainingRecipe {
        let mut optimizer = OptimizerSpec::adam();
        optimizer.learning_rate_candidates = vec![1e-3];
        optimizer.epochs = 25;
        optimizer.batch_size = 64;
        TrainingRecipe {
            optimizer,
            calib: CalibPolicy {
                refine_steps: 50,
                ..CalibPolicy::default()
            },
            convention: EpochConvention {
                full_dataset_size: full_size,
            },
        }
    }

    #[test]
    fn floor_keeps_distribution_normalized() {
        let mut p = vec![0.9, 0.1, 0.0, 0.0];
        floor_probs(&mut p);
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| x >= PROB_FLOOR));
    }

    #[test]
    fn floor_is_identity_on_uniform() {
        let mut p = uniform_distribution(4);
        floor_probs(&mut p);
        for &x in &p {
            assert!((x - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn geometric_schedule_shape() {
        let s = BlockSchedule::geometric(4, 100).unwrap();
        assert_eq!(s.boundaries, vec![8, 16, 32, 64, 100]);
        let s = BlockSchedule::geometric(10, 16).unwrap();
        assert_eq!(s.boundaries, vec![16]);
    }

    #[test]
    fn coarsened_schedule_keeps_endpoints() {
        let s = BlockSchedule::new(vec![8, 16, 32, 64, 100], 100).unwrap();
        assert_eq!(s.coarsened().boundaries, vec![8, 32, 100]);
        let s = BlockSchedule::new(vec![8, 16, 32, 64], 64).unwrap();
        assert_eq!(s.coarsened().boundaries, vec![8, 32, 64]);
    }

    #[test]
    fn schedule_validation() {
        assert!(BlockSchedule::new(vec![], 10).is_err());
        assert!(BlockSchedule::new(vec![0, 10], 10).is_err());
        assert!(BlockSchedule::new(vec![5, 5, 10], 10).is_err());
        assert!(BlockSchedule::new(vec![5, 9], 10).is_err());
    }

    #[test]
    fn single_block_is_uniform_code() {
        let ds = synth_mixture(4, 3, 32, 1.0, 5).unwrap();
        let n = ds.len();
        let schedule = BlockSchedule::new(vec![n], n).unwrap();
        let spec = crate::nn::ModelSpec::logistic(3, 4);
        let ledger = prequential_run(
            "lr", &spec, &quick_recipe(n), &ds, &schedule, 0.1, 0,
        )
        .unwrap();
        assert_eq!(ledger.entries.len(), n);
        assert!((ledger.total_nats - n as f64 * 4.0f64.ln()).abs() < 1e-9);
        assert!(ledger.param_hashes.is_empty());
    }

    #[test]
    fn first_block_cost_is_n0_ln_k() {
        // 5 uniform examples over 10 classes: 5 ln 10 nats.
        let sum: f64 = (0..5).map(|_| 10.0f64.ln()).sum();
        assert!((sum - 5.0 * 10.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn ledger_total_is_sum_of_entries() {
        let ds = synth_mixture(2, 4, 64, 3.0, 7).unwrap();
        let n = ds.len();
        let schedule = BlockSchedule::geometric(2, n).unwrap();
        let spec = crate::nn::ModelSpec::mlp(4, 2, 8, 1);
        let ledger = prequential_run(
            "mlp", &spec, &quick_recipe(n), &ds, &schedule, 0.1, 1,
        )
        .unwrap();
        let mut total = 0.0;
        for e in &ledger.entries {
            total += e.nats;
        }
        assert_eq!(total.to_bits(), ledger.total_nats.to_bits());
        let block_sum: f64 = ledger.block_totals.iter().sum();
        assert!((block_sum - total).abs() < 1e-9);
    }

    #[test]
    fn trained_model_beats_uniform_code_on_easy_data() {
        let ds = synth_mixture(2, 4, 128, 6.0, 9).unwrap();
        let n = ds.len();
        let schedule = BlockSchedule::geometric(2, n).unwrap();
        let spec = crate::nn::ModelSpec::mlp(4, 2, 8, 1);
        let ledger = prequential_run(
            "mlp", &spec, &quick_recipe(n), &ds, &schedule, 0.1, 2,
        )
        .unwrap();
        assert!(
            ledger.total_nats < n as f64 * 2.0f64.ln(),
            "DL {} not below uniform {}",
            ledger.total_nats,
            n as f64 * 2.0f64.ln()
        );
    }

    #[test]
    fn prequential_is_deterministic() {
        let ds = synth_mixture(2, 3, 32, 3.0, 11).unwrap();
        let n = ds.len();
        let schedule = BlockSchedule::geometric(2, n).unwrap();
        let spec = crate::nn::ModelSpec::logistic(3, 2);
        let a = prequential_run("lr", &spec, &quick_recipe(n), &ds, &schedule, 0.1, 3).unwrap();
        let b = prequential_run("lr", &spec, &quick_recipe(n), &ds, &schedule, 0.1, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn auc_constant_curve_is_rectangle() {
        let c = 0.42;
        let dl = auc_dl(4, &[(8, c), (64, c)]).unwrap();
        let expected = 8.0 * 4.0f64.ln() + c * (64.0 - 8.0);
        assert!((dl - expected).abs() < 1e-12);
    }

    #[test]
    fn auc_exact_on_affine_curves() {
        // l(n) = a + b n integrates exactly under the trapezoid rule.
        let a = 1.5;
        let b = -0.001;
        let l = |n: usize| a + b * n as f64;
        let curve: Vec<(usize, f64)> = [10, 20, 40, 80, 160].iter().map(|&n| (n, l(n))).collect();
        let dl = auc_dl(2, &curve).unwrap();
        let integral = |n0: f64, n1: f64| a * (n1 - n0) + 0.5 * b * (n1 * n1 - n0 * n0);
        let expected = 10.0 * 2.0f64.ln() + integral(10.0, 160.0);
        assert!((dl - expected).abs() / expected.abs() < 1e-12);
    }

    #[test]
    fn auc_rejects_unsorted_input() {
        assert!(auc_dl(2, &[(10, 0.5), (5, 0.5)]).is_err());
    }

    #[test]
    fn auc_matches_block_sums_for_blockwise_constant_curve() {
        // When the per-example nats are constant within each block and the
        // curve is sampled at every boundary, the trapezoid over [n_{b-1}, n_b]
        // equals the block average times the block width.
        let boundaries = [4usize, 8, 16, 32];
        let level = 0.7;
        let curve: Vec<(usize, f64)> = boundaries.iter().map(|&n| (n, level)).collect();
        let dl = auc_dl(2, &curve).unwrap();
        let block_sums: f64 = boundaries
            .windows(2)
            .map(|w| level * (w[1] - w[0]) as f64)
            .sum();
        let expected = 4.0 * 2.0f64.ln() + block_sums;
        assert!((dl - expected).abs() < 1e-9);
    }

    fn fake_estimate(name: &str, dl: f64, unc: f64) -> DLEstimate {
        DLEstimate {
            model_name: name.into(),
            dataset_name: "ds".into(),
            schedule: vec![4, 8],
            dl_nats: dl,
            per_seed: vec![dl],
            seed_std: unc,
            schedule_std: 0.0,
            uncertainty: unc,
        }
    }

    #[test]
    fn evidence_antisymmetry_and_telescoping() {
        let estimates = vec![
            fake_estimate("a", 1000.0, 3.0),
            fake_estimate("b", 1254.0, 4.0),
            fake_estimate("c", 900.0, 5.0),
        ];
        let table = evidence_table(&estimates).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(table.delta[i][j], -table.delta[j][i]);
            }
        }
        assert_eq!(
            table.delta[0][2],
            table.delta[0][1] + table.delta[1][2]
        );
        assert_eq!(table.delta[1][1], 0.0);
        // exp(254) worth of evidence is about 110.3 decimal orders.
        let orders = log10_bayes_factor(table.delta[1][0]);
        assert!((orders - 110.3).abs() < 0.1, "{orders}");
    }

    #[test]
    fn evidence_rejects_mismatched_runs() {
        let mut a = fake_estimate("a", 10.0, 1.0);
        let b = fake_estimate("b", 20.0, 1.0);
        a.dataset_name = "other".into();
        assert!(evidence_table(&[a, b.clone()]).is_err());
        let mut c = fake_estimate("c", 30.0, 1.0);
        c.schedule = vec![2, 8];
        assert!(evidence_table(&[b, c]).is_err());
    }

    #[test]
    fn log10_bayes_factor_basics() {
        assert_eq!(log10_bayes_factor(0.0), 0.0);
        assert!((log10_bayes_factor(std::f64::consts::LN_10) - 1.0).abs() < 1e-15);
        assert!((log10_bayes_factor(254.0) - 110.3).abs() < 0.1);
    }
}
