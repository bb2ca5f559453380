//! Bootstrap signal-to-noise ratios for model comparison, and
//! performance-profile curves over training-set size.

use serde::{Deserialize, Serialize};

use crate::calib::calibrated_xent;
use crate::data::{make_prefix_chain, Dataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::ModelSpec;
use crate::optim::TrainingRecipe;
use crate::prequential::fit_prefix;
use crate::rng::{Rng, Stream};

/// Per-(seed, example) calibrated cross-entropy losses of one model on one
/// evaluation set. Rows are seeds, columns are evaluation examples.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalMatrix {
    pub model_name: String,
    pub seeds: Vec<u64>,
    pub example_ids: Vec<u64>,
    pub losses: Matrix,
}

impl EvalMatrix {
    pub fn new(
        model_name: impl Into<String>,
        seeds: Vec<u64>,
        example_ids: Vec<u64>,
        losses: Matrix,
    ) -> Result<EvalMatrix> {
        if losses.rows() != seeds.len() || losses.cols() != example_ids.len() {
            return Err(Error::Shape(format!(
                "loss matrix {}x{} does not match {} seeds x {} examples",
                losses.rows(),
                losses.cols(),
                seeds.len(),
                example_ids.len()
            )));
        }
        if !losses.is_finite() {
            return Err(Error::Data("non-finite losses in evaluation matrix".into()));
        }
        Ok(EvalMatrix {
            model_name: model_name.into(),
            seeds,
            example_ids,
            losses,
        })
    }

    pub fn mean(&self) -> f64 {
        let n = self.losses.data().len();
        self.losses.data().iter().sum::<f64>() / n as f64
    }
}

/// Which axes a bootstrap replicate resamples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleMode {
    /// Examples and seed rows, jointly for both models.
    Joint,
    /// Examples only; seed rows enter whole.
    ExamplesOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrEstimate {
    /// Mean over seeds and examples of `loss_A - loss_B`, in nats.
    pub delta_mean: f64,
    pub variance: f64,
    pub snr: f64,
    pub n_boot: usize,
}

pub const DEFAULT_N_BOOT: usize = 1000;

/// Bootstrap signal-to-noise ratio of the performance gap between two
/// models evaluated on the same examples with the same seeds.
///
/// Each replicate draws evaluation-example columns with replacement and (in
/// joint mode) seed rows with replacement, shared between the two models so
/// common per-cell structure cancels; the variance of the replicate means is
/// the noise estimate. `0/0` is defined as 0.
pub fn bootstrap_snr(
    a: &EvalMatrix,
    b: &EvalMatrix,
    n_boot: usize,
    seed: u64,
    mode: ResampleMode,
) -> Result<SnrEstimate> {
    if a.example_ids != b.example_ids {
        return Err(Error::Data(
            "evaluation matrices cover different example sets".into(),
        ));
    }
    if a.seeds.len() != b.seeds.len() {
        return Err(Error::Data(format!(
            "evaluation matrices have {} vs {} seed rows",
            a.seeds.len(),
            b.seeds.len()
        )));
    }
    if n_boot == 0 {
        return Err(Error::Config("n_boot must be at least 1".into()));
    }
    let s = a.seeds.len();
    let e = a.example_ids.len();
    if s == 0 || e == 0 {
        return Err(Error::Data("empty evaluation matrix".into()));
    }

    // Per-cell gaps.
    let mut gap = Matrix::zeros(s, e);
    for (g, (&la, &lb)) in gap
        .data_mut()
        .iter_mut()
        .zip(a.losses.data().iter().zip(b.losses.data()))
    {
        *g = la - lb;
    }
    let delta_mean = gap.data().iter().sum::<f64>() / (s * e) as f64;

    let mut rng = Rng::stream(seed, Stream::Bootstrap, &[s as u64, e as u64]);
    let mut replicates = Vec::with_capacity(n_boot);
    let mut col_idx = vec![0usize; e];
    let mut row_idx: Vec<usize> = (0..s).collect();
    for _ in 0..n_boot {
        for c in col_idx.iter_mut() {
            *c = rng.below(e);
        }
        if mode == ResampleMode::Joint {
            for r in row_idx.iter_mut() {
                *r = rng.below(s);
            }
        }
        let mut acc = 0.0;
        for &r in &row_idx {
            let row = gap.row(r);
            for &c in &col_idx {
                acc += row[c];
            }
        }
        replicates.push(acc / (s * e) as f64);
    }

    let mean_rep = replicates.iter().sum::<f64>() / n_boot as f64;
    let variance = if n_boot > 1 {
        replicates
            .iter()
            .map(|x| (x - mean_rep) * (x - mean_rep))
            .sum::<f64>()
            / (n_boot - 1) as f64
    } else {
        0.0
    };

    let snr = if variance == 0.0 {
        if delta_mean == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (delta_mean * delta_mean / variance).sqrt()
    };

    Ok(SnrEstimate {
        delta_mean,
        variance,
        snr,
        n_boot,
    })
}

/// One point of a performance profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub prefix_size: usize,
    pub per_seed_nats: Vec<f64>,
    pub per_seed_err: Vec<f64>,
    pub mean_nats: f64,
    pub std_nats: f64,
    pub mean_err: f64,
    pub std_err: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() - 1) as f64;
    (mean, var.sqrt())
}

/// One profile measurement: fit the full recipe on a seeded prefix of
/// `size` examples and evaluate on the held-out set. Returns mean nats,
/// error-rate and the per-example nats.
pub fn profile_cell(
    model_spec: &ModelSpec,
    recipe: &TrainingRecipe,
    dataset: &Dataset,
    size: usize,
    eval_set: &Dataset,
    seed: u64,
    calib_fraction: f64,
) -> Result<(f64, f64, Vec<f64>)> {
    let plan = model_spec.validate()?;
    let chain = make_prefix_chain(dataset, &[size], seed)?;
    let prefix = dataset.subset(chain.subset_indices(size));
    let model = fit_prefix(model_spec, recipe, &prefix, calib_fraction, seed)?;
    let eval = calibrated_xent(&plan, &model.params, &model.temperature, &eval_set.full_batch())?;
    Ok((eval.nats_mean, eval.error_rate, eval.nats_per_example))
}

/// Errors unless the evaluation ids are disjoint from the pool ids.
pub fn check_no_eval_overlap(dataset: &Dataset, eval_set: &Dataset) -> Result<()> {
    use std::collections::HashSet;
    let pool_ids: HashSet<u64> = dataset.ids.iter().copied().collect();
    if eval_set.ids.iter().any(|id| pool_ids.contains(id)) {
        return Err(Error::Data(
            "evaluation set overlaps the training pool".into(),
        ));
    }
    Ok(())
}

/// Assembles profile points and evaluation matrices from per-(size, seed)
/// cells laid out as `cells[size_idx][seed_idx]`.
pub fn assemble_profile(
    model_name: &str,
    prefix_sizes: &[usize],
    seeds: &[u64],
    eval_ids: &[u64],
    cells: Vec<Vec<(f64, f64, Vec<f64>)>>,
) -> Result<(Vec<ProfilePoint>, Vec<EvalMatrix>)> {
    let mut points = Vec::with_capacity(prefix_sizes.len());
    let mut matrices = Vec::with_capacity(prefix_sizes.len());
    for (si, &size) in prefix_sizes.iter().enumerate() {
        let mut per_seed_nats = Vec::with_capacity(seeds.len());
        let mut per_seed_err = Vec::with_capacity(seeds.len());
        let mut losses = Matrix::zeros(seeds.len(), eval_ids.len());
        for (row, cell) in cells[si].iter().enumerate() {
            per_seed_nats.push(cell.0);
            per_seed_err.push(cell.1);
            losses.row_mut(row).copy_from_slice(&cell.2);
        }
        let (mean_nats, std_nats) = mean_std(&per_seed_nats);
        let (mean_err, std_err) = mean_std(&per_seed_err);
        points.push(ProfilePoint {
            prefix_size: size,
            per_seed_nats,
            per_seed_err,
            mean_nats,
            std_nats,
            mean_err,
            std_err,
        });
        matrices.push(EvalMatrix::new(
            model_name,
            seeds.to_vec(),
            eval_ids.to_vec(),
            losses,
        )?);
    }
    Ok((points, matrices))
}

/// Generalization performance as a function of the training-set size: for
/// every prefix size and seed, run the full recipe (split, sweep, train,
/// calibrate) and evaluate on the held-out set. Also returns one
/// [`EvalMatrix`] per prefix size for downstream SNR estimation.
#[allow(clippy::too_many_arguments)]
pub fn profile(
    model_name: &str,
    model_spec: &ModelSpec,
    recipe: &TrainingRecipe,
    dataset: &Dataset,
    prefix_sizes: &[usize],
    eval_set: &Dataset,
    seeds: &[u64],
    calib_fraction: f64,
) -> Result<(Vec<ProfilePoint>, Vec<EvalMatrix>)> {
    if seeds.is_empty() {
        return Err(Error::Config("need at least one seed".into()));
    }
    check_no_eval_overlap(dataset, eval_set)?;
    let mut cells = Vec::with_capacity(prefix_sizes.len());
    for &size in prefix_sizes {
        let mut row = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            row.push(profile_cell(
                model_spec,
                recipe,
                dataset,
                size,
                eval_set,
                seed,
                calib_fraction,
            )?);
        }
        cells.push(row);
    }
    assemble_profile(model_name, prefix_sizes, seeds, &eval_set.ids, cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calib::CalibPolicy;
    use crate::data::synth_mixture_part;
    use crate::optim::{EpochConvention, OptimizerSpec};

    fn fake_matrix(name: &str, seeds: usize, examples: usize, mut f: impl FnMut(usize, usize) -> f64) -> EvalMatrix {
        let mut m = Matrix::zeros(seeds, examples);
        for r in 0..seeds {
            for c in 0..examples {
                m.set(r, c, f(r, c));
            }
        }
        EvalMatrix::new(
            name,
            (0..seeds as u64).collect(),
            (0..examples as u64).collect(),
            m,
        )
        .unwrap()
    }

    #[test]
    fn identical_models_have_zero_snr() {
        let a = fake_matrix("a", 3, 50, |r, c| (r * 31 + c) as f64 * 0.01);
        let est = bootstrap_snr(&a, &a, 100, 7, ResampleMode::Joint).unwrap();
        assert_eq!(est.delta_mean, 0.0);
        assert_eq!(est.snr, 0.0);
    }

    #[test]
    fn snr_is_symmetric_in_a_and_b() {
        let mut rng = Rng::from_seed(3);
        let a = fake_matrix("a", 2, 64, |_, _| rng.uniform(0.1, 1.0));
        let b = fake_matrix("b", 2, 64, |_, _| rng.uniform(0.3, 1.2));
        let ab = bootstrap_snr(&a, &b, 500, 9, ResampleMode::Joint).unwrap();
        let ba = bootstrap_snr(&b, &a, 500, 9, ResampleMode::Joint).unwrap();
        assert_eq!(ab.delta_mean, -ba.delta_mean);
        assert_eq!(ab.variance, ba.variance);
        assert_eq!(ab.snr, ba.snr);
    }

    #[test]
    fn snr_invariant_under_shared_offsets() {
        let mut rng = Rng::from_seed(4);
        let base = fake_matrix("a", 3, 40, |_, _| rng.uniform(0.0, 1.0));
        let mut rng2 = Rng::from_seed(5);
        let other = fake_matrix("b", 3, 40, |_, _| rng2.uniform(0.2, 0.9));
        // Add the same per-cell offsets to both.
        let mut rng3 = Rng::from_seed(6);
        let offsets: Vec<f64> = (0..3 * 40).map(|_| rng3.uniform(-2.0, 2.0)).collect();
        let shift = |m: &EvalMatrix| {
            let mut s = m.clone();
            for (x, o) in s.losses.data_mut().iter_mut().zip(&offsets) {
                *x += o;
            }
            s
        };
        let plain = bootstrap_snr(&base, &other, 300, 11, ResampleMode::Joint).unwrap();
        let shifted = bootstrap_snr(&shift(&base), &shift(&other), 300, 11, ResampleMode::Joint).unwrap();
        // Algebraically the offsets cancel per cell; only f64 rounding of the
        // shifted entries remains.
        assert!((plain.delta_mean - shifted.delta_mean).abs() < 1e-12);
        assert!((plain.snr - shifted.snr).abs() / plain.snr.max(1e-12) < 1e-9);
    }

    #[test]
    fn snr_grows_with_evaluation_set_size_for_shifted_models() {
        // Models differing by a constant shift in distribution (independent
        // per-example noise on both sides): the gap estimate sharpens as the
        // evaluation set grows.
        let shift = 0.2;
        let make = |n: usize| {
            let mut rng_a = Rng::from_seed(100 + n as u64);
            let mut rng_b = Rng::from_seed(200 + n as u64);
            let a = fake_matrix("a", 3, n, |_, _| 1.0 + 0.5 * rng_a.normal());
            let b = fake_matrix("b", 3, n, |_, _| 1.0 + shift + 0.5 * rng_b.normal());
            (a, b)
        };
        let (a16, b16) = make(16);
        let (a1024, b1024) = make(1024);
        let small = bootstrap_snr(&a16, &b16, 1000, 3, ResampleMode::Joint).unwrap();
        let large = bootstrap_snr(&a1024, &b1024, 1000, 3, ResampleMode::Joint).unwrap();
        assert!(
            large.snr > small.snr,
            "snr(1024)={} <= snr(16)={}",
            large.snr,
            small.snr
        );
    }

    #[test]
    fn snr_is_deterministic_per_seed() {
        let mut rng = Rng::from_seed(8);
        let a = fake_matrix("a", 2, 32, |_, _| rng.uniform(0.0, 1.0));
        let b = fake_matrix("b", 2, 32, |_, _| rng.uniform(0.0, 1.0));
        let x = bootstrap_snr(&a, &b, 250, 42, ResampleMode::Joint).unwrap();
        let y = bootstrap_snr(&a, &b, 250, 42, ResampleMode::Joint).unwrap();
        assert_eq!(x, y);
        let z = bootstrap_snr(&a, &b, 250, 43, ResampleMode::Joint).unwrap();
        assert_ne!(x.variance, z.variance);
    }

    #[test]
    fn mismatched_example_sets_rejected() {
        let a = fake_matrix("a", 2, 10, |_, _| 0.0);
        let mut b = fake_matrix("b", 2, 10, |_, _| 0.0);
        b.example_ids[3] = 999;
        assert!(bootstrap_snr(&a, &b, 10, 0, ResampleMode::Joint).is_err());
    }

    fn profile_setup() -> (Dataset, Dataset, TrainingRecipe) {
        let pool = synth_mixture_part(2, 4, 128, 3.0, 21, 0).unwrap();
        let eval = synth_mixture_part(2, 4, 64, 3.0, 21, 1).unwrap();
        let mut optimizer = OptimizerSpec::adam();
        optimizer.learning_rate_candidates = vec![1e-3];
        optimizer.epochs = 20;
        optimizer.batch_size = 64;
        let recipe = TrainingRecipe {
            optimizer,
            calib: CalibPolicy {
                refine_steps: 50,
                ..CalibPolicy::default()
            },
            convention: EpochConvention {
                full_dataset_size: pool.len(),
            },
        };
        (pool, eval, recipe)
    }

    #[test]
    fn profile_improves_with_prefix_size() {
        let (pool, eval, recipe) = profile_setup();
        let spec = ModelSpec::mlp(4, 2, 8, 1);
        let (points, matrices) = profile(
            "mlp", &spec, &recipe, &pool, &[8, 64, 256], &eval, &[1, 2], 0.1,
        )
        .unwrap();
        assert_eq!(points.len(), 3);
        assert_eq!(matrices.len(), 3);
        assert!(
            points[2].mean_nats < points[0].mean_nats,
            "{} -> {}",
            points[0].mean_nats,
            points[2].mean_nats
        );
        assert_eq!(matrices[0].losses.rows(), 2);
        assert_eq!(matrices[0].losses.cols(), eval.len());
    }

    #[test]
    fn profile_rejects_overlapping_eval_set() {
        let (pool, _, recipe) = profile_setup();
        let spec = ModelSpec::logistic(4, 2);
        let overlap = pool.subset(&(0..32).collect::<Vec<_>>());
        assert!(profile(
            "lr", &spec, &recipe, &pool, &[8], &overlap, &[1], 0.1
        )
        .is_err());
    }
}
