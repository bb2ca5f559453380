//! Dataset ingestion, nested prefix construction and train/calibration
//! splits.

mod csv;
mod idx;

pub use csv::load_csv;
pub use idx::load_idx;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{Batch, InputShape};
use crate::rng::{Rng, Stream};

/// A labeled dataset. `ids` carry example identity across subsetting and
/// splitting so leakage checks can compare provenance, not positions.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub examples: Matrix,
    pub labels: Vec<u32>,
    pub num_classes: usize,
    pub input_shape: InputShape,
    pub ids: Vec<u64>,
    pub provenance: String,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        examples: Matrix,
        labels: Vec<u32>,
        num_classes: usize,
        input_shape: InputShape,
        provenance: impl Into<String>,
    ) -> Result<Dataset> {
        if examples.rows() == 0 {
            return Err(Error::Data("dataset must contain at least one example".into()));
        }
        if examples.rows() != labels.len() {
            return Err(Error::Data(format!(
                "{} examples but {} labels",
                examples.rows(),
                labels.len()
            )));
        }
        if examples.cols() != input_shape.dim() {
            return Err(Error::Data(format!(
                "example dim {} does not match input shape dim {}",
                examples.cols(),
                input_shape.dim()
            )));
        }
        if num_classes < 2 {
            return Err(Error::Data("need at least 2 classes".into()));
        }
        if let Some(&l) = labels.iter().find(|&&l| l as usize >= num_classes) {
            return Err(Error::Data(format!(
                "label {l} out of range for {num_classes} classes"
            )));
        }
        let ids = (0..examples.rows() as u64).collect();
        Ok(Dataset {
            name: name.into(),
            examples,
            labels,
            num_classes,
            input_shape,
            ids,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// New dataset holding the given rows (ids preserved).
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            examples: self.examples.gather_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            input_shape: self.input_shape,
            ids: idx.iter().map(|&i| self.ids[i]).collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// The whole dataset as one batch.
    pub fn full_batch(&self) -> Batch {
        Batch {
            inputs: self.examples.clone(),
            labels: self.labels.clone(),
        }
    }

    /// Batch view of selected rows.
    pub fn batch_of(&self, idx: &[usize]) -> Batch {
        Batch {
            inputs: self.examples.gather_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Gaussian class clusters at seeded random centers with pairwise distance
/// at least `separation`, unit noise variance, balanced classes.
///
/// `part` selects an independent draw of examples over the *same* centers:
/// part 0 is the training pool, part 1 a held-out evaluation set from the
/// identical distribution. Ids are tagged with the part so pools stay
/// disjoint under leakage checks.
pub fn synth_mixture_part(
    num_classes: usize,
    dim: usize,
    examples_per_class: usize,
    separation: f64,
    seed: u64,
    part: u64,
) -> Result<Dataset> {
    if num_classes < 2 || dim == 0 || examples_per_class == 0 {
        return Err(Error::Config(
            "synthetic mixture needs >=2 classes, positive dim and examples per class".into(),
        ));
    }
    if !(separation >= 0.0) {
        return Err(Error::Config("separation must be non-negative".into()));
    }

    // Centers: rejection-sample inside a box whose half-width tracks the
    // requested separation, so the parameter controls cluster overlap
    // against the unit noise. Infeasible combinations (many classes, low
    // dimension, large separation) run out of retries and error.
    let mut center_rng = Rng::stream(seed, Stream::Synth, &[0]);
    let half = separation.max(1.0);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(num_classes);
    let mut attempts = 0usize;
    while centers.len() < num_classes {
        attempts += 1;
        if attempts > 10_000 {
            return Err(Error::Config(format!(
                "could not place {num_classes} centers at separation {separation}"
            )));
        }
        let cand: Vec<f64> = (0..dim).map(|_| center_rng.uniform(-half, half)).collect();
        let ok = centers.iter().all(|c| {
            let d2: f64 = c.iter().zip(&cand).map(|(a, b)| (a - b) * (a - b)).sum();
            d2.sqrt() >= separation
        });
        if ok {
            centers.push(cand);
        }
    }

    let n = num_classes * examples_per_class;
    let mut noise_rng = Rng::stream(seed, Stream::Synth, &[1, part]);
    let mut examples = Matrix::zeros(n, dim);
    let mut labels = Vec::with_capacity(n);
    // Interleave classes so raw prefixes stay roughly balanced.
    for i in 0..examples_per_class {
        for class in 0..num_classes {
            let r = i * num_classes + class;
            let row = examples.row_mut(r);
            for (x, c) in row.iter_mut().zip(&centers[class]) {
                *x = c + noise_rng.normal();
            }
            labels.push(class as u32);
        }
    }

    let mut ds = Dataset::new(
        format!("synth-k{num_classes}-d{dim}-s{separation}"),
        examples,
        labels,
        num_classes,
        InputShape::Flat(dim),
        format!("synth(seed={seed},part={part})"),
    )?;
    for (i, id) in ds.ids.iter_mut().enumerate() {
        *id = (part << 48) | i as u64;
    }
    Ok(ds)
}

/// [`synth_mixture_part`] with part 0.
pub fn synth_mixture(
    num_classes: usize,
    dim: usize,
    examples_per_class: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    synth_mixture_part(num_classes, dim, examples_per_class, separation, seed, 0)
}

/// Nested family of subsets: one seeded global permutation; the subset of
/// size `n` is its first `n` entries, so smaller subsets are always contained
/// in larger ones and the examples added between two sizes are exactly the
/// permutation slice between them.
#[derive(Debug, Clone)]
pub struct PrefixChain {
    pub permutation: Vec<usize>,
    pub sizes: Vec<usize>,
}

impl PrefixChain {
    pub fn subset_indices(&self, n: usize) -> &[usize] {
        &self.permutation[..n]
    }

    /// Indices added when growing from `from` to `to` examples.
    pub fn added_indices(&self, from: usize, to: usize) -> &[usize] {
        &self.permutation[from..to]
    }
}

pub fn make_prefix_chain(dataset: &Dataset, sizes: &[usize], seed: u64) -> Result<PrefixChain> {
    if sizes.is_empty() {
        return Err(Error::Config("prefix chain needs at least one size".into()));
    }
    for w in sizes.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Config(format!(
                "prefix sizes must be strictly increasing, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    if sizes[0] == 0 {
        return Err(Error::Config("prefix sizes must be positive".into()));
    }
    let max = *sizes.last().unwrap();
    if max > dataset.len() {
        return Err(Error::Config(format!(
            "prefix size {max} exceeds dataset size {}",
            dataset.len()
        )));
    }
    let mut permutation: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = Rng::stream(seed, Stream::Chain, &[dataset.len() as u64]);
    rng.shuffle(&mut permutation);
    Ok(PrefixChain {
        permutation,
        sizes: sizes.to_vec(),
    })
}

/// Train/calibration split parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub calib_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(calib_fraction: f64, seed: u64) -> Result<SplitSpec> {
        if !(calib_fraction > 0.0 && calib_fraction < 1.0) {
            return Err(Error::Config(format!(
                "calibration fraction must be in (0,1), got {calib_fraction}"
            )));
        }
        Ok(SplitSpec {
            calib_fraction,
            seed,
        })
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            calib_fraction: 0.10,
            seed: 0,
        }
    }
}

/// Splits a subset into disjoint train and calibration sets.
///
/// Calibration gets `max(1, round(fraction * n))` examples (never more than
/// `n - 1`). The split stream is keyed on `(seed, n)` so prequential prefixes
/// of different sizes derive their own reproducible splits.
pub fn split_train_calib(subset: &Dataset, split: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let n = subset.len();
    if n < 2 {
        return Err(Error::Data(format!(
            "cannot split {n} examples into train and calibration sets"
        )));
    }
    let calib_n = ((split.calib_fraction * n as f64).round() as usize)
        .max(1)
        .min(n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = Rng::stream(split.seed, Stream::Split, &[n as u64]);
    rng.shuffle(&mut idx);
    let calib = subset.subset(&idx[..calib_n]);
    let train = subset.subset(&idx[calib_n..]);
    Ok((train, calib))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn synth_is_deterministic() {
        let a = synth_mixture(3, 4, 10, 2.0, 42).unwrap();
        let b = synth_mixture(3, 4, 10, 2.0, 42).unwrap();
        assert_eq!(a.examples, b.examples);
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn synth_parts_share_distribution_but_not_examples() {
        let a = synth_mixture_part(3, 4, 10, 2.0, 42, 0).unwrap();
        let b = synth_mixture_part(3, 4, 10, 2.0, 42, 1).unwrap();
        assert_ne!(a.examples, b.examples);
        let ids_a: HashSet<u64> = a.ids.iter().copied().collect();
        assert!(b.ids.iter().all(|id| !ids_a.contains(id)));
    }

    #[test]
    fn synth_separation_zero_is_valid() {
        let ds = synth_mixture(2, 3, 5, 0.0, 1).unwrap();
        assert_eq!(ds.len(), 10);
    }

    #[test]
    fn synth_is_balanced() {
        let ds = synth_mixture(4, 2, 7, 1.0, 9).unwrap();
        for class in 0..4u32 {
            assert_eq!(ds.labels.iter().filter(|&&l| l == class).count(), 7);
        }
    }

    #[test]
    fn prefix_chain_superset_property() {
        let ds = synth_mixture(2, 2, 64, 1.0, 3).unwrap();
        let chain = make_prefix_chain(&ds, &[10, 50, 100], 7).unwrap();
        let s10: HashSet<usize> = chain.subset_indices(10).iter().copied().collect();
        let s50: HashSet<usize> = chain.subset_indices(50).iter().copied().collect();
        let s100: HashSet<usize> = chain.subset_indices(100).iter().copied().collect();
        assert!(s10.is_subset(&s50));
        assert!(s50.is_subset(&s100));
    }

    #[test]
    fn prefix_chain_full_size_is_a_permutation() {
        let ds = synth_mixture(2, 2, 16, 1.0, 3).unwrap();
        let chain = make_prefix_chain(&ds, &[ds.len()], 7).unwrap();
        let mut sorted = chain.permutation.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..ds.len()).collect::<Vec<_>>());
    }

    #[test]
    fn prefix_chain_seeds_differ() {
        let ds = synth_mixture(2, 2, 64, 1.0, 3).unwrap();
        let a = make_prefix_chain(&ds, &[64], 1).unwrap();
        let b = make_prefix_chain(&ds, &[64], 2).unwrap();
        assert_ne!(a.permutation, b.permutation);
    }

    #[test]
    fn prefix_chain_rejects_bad_sizes() {
        let ds = synth_mixture(2, 2, 8, 1.0, 3).unwrap();
        assert!(make_prefix_chain(&ds, &[4, 4], 0).is_err());
        assert!(make_prefix_chain(&ds, &[4, 1000], 0).is_err());
    }

    #[test]
    fn split_sizes_follow_fraction() {
        let ds = synth_mixture(2, 2, 50, 1.0, 3).unwrap();
        let (train, calib) = split_train_calib(&ds, &SplitSpec::default()).unwrap();
        assert_eq!(train.len(), 90);
        assert_eq!(calib.len(), 10);
    }

    #[test]
    fn split_of_two_examples_is_one_one() {
        let ds = synth_mixture(2, 2, 1, 1.0, 3).unwrap();
        let (train, calib) = split_train_calib(&ds, &SplitSpec::default()).unwrap();
        assert_eq!((train.len(), calib.len()), (1, 1));
    }

    #[test]
    fn split_too_small_errors() {
        let ds = synth_mixture(2, 2, 1, 1.0, 3).unwrap();
        let one = ds.subset(&[0]);
        assert!(split_train_calib(&one, &SplitSpec::default()).is_err());
    }

    #[test]
    fn linear_probe_on_separated_mixture() {
        // Frozen regression check: separation 10 with unit variance is easy
        // for a linear decision rule learned by a few full-batch steps.
        use crate::calib::{calibrated_xent, Temperature};
        use crate::nn::{backward_with_plan, init_params, Mode, ModelSpec};

        let ds = synth_mixture(2, 4, 128, 10.0, 11).unwrap();
        let spec = ModelSpec::logistic(4, 2);
        let plan = spec.validate().unwrap();
        let mut params = init_params(&spec, 0).unwrap();
        let batch = ds.full_batch();
        for _ in 0..200 {
            let (_, grads) = backward_with_plan(&plan, &params, &batch, 1.0, Mode::Eval, 0).unwrap();
            for (p, g) in params.layers.iter_mut().zip(&grads.layers) {
                for (w, gw) in p.w.data_mut().iter_mut().zip(g.w.data()) {
                    *w -= 0.5 * gw;
                }
                for (b, gb) in p.b.iter_mut().zip(&g.b) {
                    *b -= 0.5 * gb;
                }
            }
        }
        let eval = calibrated_xent(&plan, &params, &Temperature::identity(), &batch).unwrap();
        assert!(eval.error_rate <= 0.01, "error rate {}", eval.error_rate);
    }
}
