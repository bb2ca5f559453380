//! Experiment configuration: a single JSON document that names the dataset,
//! the candidate models, the training procedure and the outputs. The raw
//! config bytes are hashed into every output file for provenance.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calib::CalibPolicy;
use crate::data::{load_csv, load_idx, synth_mixture_part, Dataset};
use crate::error::{Error, Result};
use crate::nn::ModelSpec;
use crate::optim::{AnnealPolicy, EpochConvention, OptimizerKind, OptimizerSpec, TrainingRecipe};
use crate::prequential::BlockSchedule;
use crate::rng::fnv1a;
use crate::stats::ResampleMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetConfig {
    Synth {
        num_classes: usize,
        dim: usize,
        train_per_class: usize,
        eval_per_class: usize,
        separation: f64,
        seed: u64,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        eval_images: PathBuf,
        eval_labels: PathBuf,
    },
    Csv {
        train: PathBuf,
        eval: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedModel {
    pub name: String,
    pub spec: ModelSpec,
}

/// Optimizer section: `kind` is required, everything else falls back to the
/// kind's published defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate_candidates: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub momentum: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rms_decay: Option<f64>,
}

impl OptimizerConfig {
    pub fn resolve(&self) -> OptimizerSpec {
        let mut spec = match self.kind {
            OptimizerKind::Adam => OptimizerSpec::adam(),
            OptimizerKind::MomentumSgdCosine => OptimizerSpec::momentum_sgd_cosine(),
            OptimizerKind::RmspropCosine => OptimizerSpec::rmsprop_cosine(),
        };
        if let Some(v) = &self.learning_rate_candidates {
            spec.learning_rate_candidates = v.clone();
        }
        if let Some(v) = self.epochs {
            spec.epochs = v;
        }
        if let Some(v) = self.momentum {
            spec.momentum = v;
        }
        if let Some(v) = self.epsilon {
            spec.epsilon = v;
        }
        if let Some(v) = self.batch_size {
            spec.batch_size = v;
        }
        if let Some(v) = self.beta1 {
            spec.beta1 = v;
        }
        if let Some(v) = self.beta2 {
            spec.beta2 = v;
        }
        if let Some(v) = self.rms_decay {
            spec.rms_decay = v;
        }
        spec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleConfig {
    Geometric,
    Boundaries(Vec<usize>),
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig::Geometric
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthSweepConfig {
    pub widths: Vec<usize>,
    #[serde(default = "default_depth")]
    pub depth: usize,
}

fn default_depth() -> usize {
    2
}

fn default_calib_fraction() -> f64 {
    0.10
}

fn default_n_boot() -> usize {
    crate::stats::DEFAULT_N_BOOT
}

fn default_resample() -> ResampleMode {
    ResampleMode::Joint
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub models: Vec<NamedModel>,
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub calib: Option<CalibPolicy>,
    #[serde(default)]
    pub prefix_sizes: Vec<usize>,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    pub seeds: Vec<u64>,
    #[serde(default = "default_calib_fraction")]
    pub calib_fraction: f64,
    #[serde(default = "default_n_boot")]
    pub n_boot: usize,
    #[serde(default = "default_resample")]
    pub resample: ResampleMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width_sweep: Option<WidthSweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anneal: Option<AnnealPolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

/// A config parsed, hashed and validated, with its datasets loaded.
pub struct Experiment {
    pub config: ExperimentConfig,
    /// FNV-1a of the raw config bytes, hex.
    pub config_hash: String,
    pub raw_config: Vec<u8>,
    pub pool: Dataset,
    pub eval: Dataset,
    pub recipe: TrainingRecipe,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<(ExperimentConfig, Vec<u8>)> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let config: ExperimentConfig = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok((config, bytes))
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() && self.width_sweep.is_none() {
            return Err(Error::Config("config names no models".into()));
        }
        let mut names: Vec<&str> = self.models.iter().map(|m| m.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.models.len() {
            return Err(Error::Config("duplicate model names".into()));
        }
        for m in &self.models {
            m.spec
                .validate()
                .map_err(|e| Error::Config(format!("model {}: {e}", m.name)))?;
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("need at least one seed".into()));
        }
        if !(self.calib_fraction > 0.0 && self.calib_fraction < 1.0) {
            return Err(Error::Config(format!(
                "calib_fraction {} outside (0,1)",
                self.calib_fraction
            )));
        }
        for w in self.prefix_sizes.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Config("prefix_sizes must be strictly increasing".into()));
            }
        }
        self.optimizer.resolve().validate()?;
        if let Some(c) = &self.calib {
            c.validate()?;
        }
        if let Some(ws) = &self.width_sweep {
            if ws.widths.is_empty() || ws.widths.iter().any(|&w| w == 0) {
                return Err(Error::Config("width sweep needs positive widths".into()));
            }
        }
        Ok(())
    }

    pub fn load_datasets(&self) -> Result<(Dataset, Dataset)> {
        match &self.dataset {
            DatasetConfig::Synth {
                num_classes,
                dim,
                train_per_class,
                eval_per_class,
                separation,
                seed,
            } => {
                let pool =
                    synth_mixture_part(*num_classes, *dim, *train_per_class, *separation, *seed, 0)?;
                let eval =
                    synth_mixture_part(*num_classes, *dim, *eval_per_class, *separation, *seed, 1)?;
                Ok((pool, eval))
            }
            DatasetConfig::Idx {
                train_images,
                train_labels,
                eval_images,
                eval_labels,
            } => {
                let pool = load_idx(train_images, train_labels)?;
                let mut eval = load_idx(eval_images, eval_labels)?;
                offset_eval_ids(&mut eval);
                Ok((pool, eval))
            }
            DatasetConfig::Csv { train, eval } => {
                let pool = load_csv(train)?;
                let mut eval = load_csv(eval)?;
                offset_eval_ids(&mut eval);
                Ok((pool, eval))
            }
        }
    }

    /// Builds the prequential schedule for a dataset of `n` examples with
    /// `k` classes.
    pub fn schedule_for(&self, k: usize, n: usize) -> Result<BlockSchedule> {
        match &self.schedule {
            ScheduleConfig::Geometric => BlockSchedule::geometric(k, n),
            ScheduleConfig::Boundaries(b) => BlockSchedule::new(b.clone(), n),
        }
    }

    pub fn calib_policy(&self) -> CalibPolicy {
        self.calib.unwrap_or_default()
    }
}

/// File-loaded evaluation sets reuse ids 0..n; shift them into their own
/// range so leakage checks compare provenance meaningfully.
fn offset_eval_ids(eval: &mut Dataset) {
    for id in &mut eval.ids {
        *id |= 1 << 63;
    }
}

/// Loads, validates and resolves a config file into a runnable experiment.
/// `seed_offset` shifts every seed (a replication knob that leaves the
/// config file untouched).
pub fn load_experiment(path: &Path, seed_offset: u64) -> Result<Experiment> {
    let (mut config, raw) = ExperimentConfig::from_path(path)?;
    config.validate()?;
    for s in &mut config.seeds {
        *s = s.wrapping_add(seed_offset);
    }
    let (pool, eval) = config.load_datasets()?;
    crate::stats::check_no_eval_overlap(&pool, &eval)?;
    for m in &config.models {
        if m.spec.input_shape.dim() != pool.input_shape.dim() {
            return Err(Error::Config(format!(
                "model {} expects input dim {}, dataset has {}",
                m.name,
                m.spec.input_shape.dim(),
                pool.input_shape.dim()
            )));
        }
        if m.spec.num_classes != pool.num_classes {
            return Err(Error::Config(format!(
                "model {} expects {} classes, dataset has {}",
                m.name, m.spec.num_classes, pool.num_classes
            )));
        }
    }
    for &size in &config.prefix_sizes {
        if size > pool.len() {
            return Err(Error::Config(format!(
                "prefix size {size} exceeds the pool size {}",
                pool.len()
            )));
        }
    }
    let recipe = TrainingRecipe {
        optimizer: config.optimizer.resolve(),
        calib: config.calib_policy(),
        convention: EpochConvention {
            full_dataset_size: pool.len(),
        },
    };
    let config_hash = format!("{:016x}", fnv1a(&raw));
    Ok(Experiment {
        config,
        config_hash,
        raw_config: raw,
        pool,
        eval,
        recipe,
    })
}
