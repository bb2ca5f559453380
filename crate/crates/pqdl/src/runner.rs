//! Subcommand implementations: each takes a loaded [`Experiment`] and writes
//! plot-ready CSV (plus binary artifacts) into an output directory.
//!
//! Every output file starts with a provenance comment carrying the config
//! hash and the seed set; identical configs reproduce identical bytes.
//! Independent (model, seed, prefix) tasks run on a bounded worker pool and
//! results are merged in key order, so the files do not depend on `--jobs`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::codec::{decode_dataset, encode_dataset, EncodedMessage};
use crate::config::Experiment;

use crate::error::{Error, Result};
use crate::jobs::run_keyed;
use crate::nn::{Activation, LayerSpec, ModelSpec};
use crate::optim::{sweep_lr, train_auto_anneal, TrainRun};
use crate::prequential::{
    combine_replicates, evidence_table, log10_bayes_factor, prequential_run, CodeLedger,
    DLEstimate,
};
use crate::stats::{assemble_profile, bootstrap_snr, profile_cell, EvalMatrix, ProfilePoint};

fn provenance_line(exp: &Experiment) -> String {
    let seeds: Vec<String> = exp.config.seeds.iter().map(|s| s.to_string()).collect();
    format!("# pqdl config={} seeds={}\n", exp.config_hash, seeds.join(","))
}

fn write_output(out_dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

fn write_binary(out_dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf> {
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

/// Copies the raw config into the output directory for provenance.
fn write_config_copy(exp: &Experiment, out_dir: &Path) -> Result<()> {
    write_binary(out_dir, "config.json", &exp.raw_config)?;
    Ok(())
}

const PARAMS_MAGIC: &[u8; 4] = b"PQPM";

/// Serializes final parameters and temperature: magic, version u16 LE,
/// header-length u32 LE, header JSON, then all weights and biases as f64 LE
/// in layer order.
fn params_blob(exp: &Experiment, model: &str, seed: u64, lr: f64, run: &TrainRun) -> Result<Vec<u8>> {
    #[derive(serde::Serialize)]
    struct BlobHeader<'a> {
        model_name: &'a str,
        config_hash: &'a str,
        seed: u64,
        learning_rate: f64,
        log_temperature: f64,
        total_steps: u64,
        num_values: usize,
    }
    let num_values: usize = run
        .params
        .layers
        .iter()
        .map(|l| l.w.data().len() + l.b.len())
        .sum();
    let header = serde_json::to_vec(&BlobHeader {
        model_name: model,
        config_hash: &exp.config_hash,
        seed,
        learning_rate: lr,
        log_temperature: run.temperature.log_t,
        total_steps: run.total_steps,
        num_values,
    })
    .map_err(|e| Error::Config(format!("params header: {e}")))?;
    let mut out = Vec::with_capacity(10 + header.len() + num_values * 8);
    out.extend_from_slice(PARAMS_MAGIC);
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for l in &run.params.layers {
        for &x in l.w.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for &x in &l.b {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

/// `train`: full-pool sweep + train per (model, seed); history CSV and
/// parameter blob per run. When the config carries an `anneal` section the
/// fixed epoch budget is replaced by the auto-annealing schedule (at the
/// largest candidate rate) and a step-count summary is written as well.
pub fn cmd_train(exp: &Experiment, out_dir: &Path, jobs: usize) -> Result<Vec<PathBuf>> {
    let (train_set, calib_set) = crate::data::split_train_calib(
        &exp.pool,
        &crate::data::SplitSpec {
            calib_fraction: exp.config.calib_fraction,
            seed: exp.config.seeds[0],
        },
    )?;
    let anneal = exp.config.anneal;

    type Key = (usize, usize);
    let mut tasks: Vec<(Key, Box<dyn FnOnce() -> Result<(f64, TrainRun)> + Send>)> = Vec::new();
    for (mi, m) in exp.config.models.iter().enumerate() {
        for (si, &seed) in exp.config.seeds.iter().enumerate() {
            let spec = m.spec.clone();
            let recipe = exp.recipe.clone();
            let train_set = train_set.clone();
            let calib_set = calib_set.clone();
            tasks.push((
                (mi, si),
                Box::new(move || match anneal {
                    None => sweep_lr(
                        &spec,
                        &recipe.optimizer,
                        &train_set,
                        &calib_set,
                        &recipe.convention,
                        seed,
                        &recipe.calib,
                    ),
                    Some(a) => {
                        let lr0 = *recipe
                            .optimizer
                            .learning_rate_candidates
                            .last()
                            .expect("validated non-empty");
                        train_auto_anneal(
                            &spec,
                            &recipe.optimizer,
                            lr0,
                            &train_set,
                            &calib_set,
                            &recipe.convention,
                            seed,
                            &recipe.calib,
                            &a,
                        )
                        .map(|run| (lr0, run))
                    }
                }),
            ));
        }
    }
    let results = run_keyed(jobs, tasks)?;

    write_config_copy(exp, out_dir)?;
    let mut written = Vec::new();
    let mut steps_csv = provenance_line(exp);
    steps_csv.push_str("model,seed,total_steps,final_calib_nats,final_calib_err\n");
    for ((mi, si), (lr, run)) in &results {
        let model = &exp.config.models[*mi].name;
        let seed = exp.config.seeds[*si];
        let mut csv = provenance_line(exp);
        csv.push_str("step,train_nats,calib_nats_raw,calib_nats_cal,calib_err\n");
        for h in &run.history {
            writeln!(
                csv,
                "{},{},{},{},{}",
                h.step, h.train_nats, h.calib_nats_raw, h.calib_nats_cal, h.calib_err
            )
            .unwrap();
        }
        written.push(write_output(
            out_dir,
            &format!("train_{model}_seed{seed}.csv"),
            &csv,
        )?);
        written.push(write_binary(
            out_dir,
            &format!("params_{model}_seed{seed}.pqpm"),
            &params_blob(exp, model, seed, *lr, run)?,
        )?);
        writeln!(
            steps_csv,
            "{},{},{},{},{}",
            model, seed, run.total_steps, run.final_calib_nats, run.final_calib_err
        )
        .unwrap();
        if run.leak_count != 0 {
            return Err(Error::Train(format!(
                "leakage guard tripped: {} calibration examples saw gradients",
                run.leak_count
            )));
        }
    }
    if anneal.is_some() {
        written.push(write_output(out_dir, "anneal_summary.csv", &steps_csv)?);
    }
    Ok(written)
}

/// Runs profile cells for the given models in parallel and assembles
/// points/matrices per model.
fn run_profiles(
    exp: &Experiment,
    models: &[(String, ModelSpec)],
    prefix_sizes: &[usize],
    jobs: usize,
) -> Result<Vec<(String, Vec<ProfilePoint>, Vec<EvalMatrix>)>> {
    type Key = (usize, usize, usize);
    let mut tasks: Vec<(Key, Box<dyn FnOnce() -> Result<(f64, f64, Vec<f64>)> + Send>)> =
        Vec::new();
    for (mi, (_, spec)) in models.iter().enumerate() {
        for (pi, &size) in prefix_sizes.iter().enumerate() {
            for (si, &seed) in exp.config.seeds.iter().enumerate() {
                let spec = spec.clone();
                let recipe = exp.recipe.clone();
                let pool = exp.pool.clone();
                let eval = exp.eval.clone();
                let calib_fraction = exp.config.calib_fraction;
                tasks.push((
                    (mi, pi, si),
                    Box::new(move || {
                        profile_cell(&spec, &recipe, &pool, size, &eval, seed, calib_fraction)
                    }),
                ));
            }
        }
    }
    let results = run_keyed(jobs, tasks)?;

    // Results come back sorted by (model, size, seed); regroup per model.
    let n_sizes = prefix_sizes.len();
    let mut grouped: Vec<Vec<Vec<(f64, f64, Vec<f64>)>>> =
        vec![vec![Vec::new(); n_sizes]; models.len()];
    for ((mi, pi, _), cell) in results {
        grouped[mi][pi].push(cell);
    }
    let mut out = Vec::new();
    for ((name, _), cells) in models.iter().zip(grouped) {
        let (points, matrices) =
            assemble_profile(name, prefix_sizes, &exp.config.seeds, &exp.eval.ids, cells)?;
        out.push((name.clone(), points, matrices));
    }
    Ok(out)
}

fn named_models(exp: &Experiment) -> Vec<(String, ModelSpec)> {
    exp.config
        .models
        .iter()
        .map(|m| (m.name.clone(), m.spec.clone()))
        .collect()
}

fn profile_csvs(
    exp: &Experiment,
    profiles: &[(String, Vec<ProfilePoint>, Vec<EvalMatrix>)],
) -> (String, String) {
    let mut long = provenance_line(exp);
    long.push_str("prefix_size,model,seed,nats,error_rate\n");
    let mut summary = provenance_line(exp);
    summary.push_str("prefix_size,model,mean_nats,std_nats,mean_err,std_err\n");
    for (name, points, _) in profiles {
        for p in points {
            for (si, &seed) in exp.config.seeds.iter().enumerate() {
                writeln!(
                    long,
                    "{},{},{},{},{}",
                    p.prefix_size, name, seed, p.per_seed_nats[si], p.per_seed_err[si]
                )
                .unwrap();
            }
            writeln!(
                summary,
                "{},{},{},{},{},{}",
                p.prefix_size, name, p.mean_nats, p.std_nats, p.mean_err, p.std_err
            )
            .unwrap();
        }
    }
    (long, summary)
}

/// `profile`: generalization nats and error-rate per (model, prefix size,
/// seed) on the held-out evaluation set.
pub fn cmd_profile(exp: &Experiment, out_dir: &Path, jobs: usize) -> Result<Vec<PathBuf>> {
    if exp.config.prefix_sizes.is_empty() {
        return Err(Error::Config("profile requires prefix_sizes".into()));
    }
    let profiles = run_profiles(exp, &named_models(exp), &exp.config.prefix_sizes, jobs)?;
    let (long, summary) = profile_csvs(exp, &profiles);
    write_config_copy(exp, out_dir)?;
    Ok(vec![
        write_output(out_dir, "profile.csv", &long)?,
        write_output(out_dir, "profile_summary.csv", &summary)?,
    ])
}

/// `snr`: pairwise bootstrap signal-to-noise ratios per prefix size.
pub fn cmd_snr(exp: &Experiment, out_dir: &Path, jobs: usize) -> Result<Vec<PathBuf>> {
    if exp.config.models.len() < 2 {
        return Err(Error::Config("snr needs at least two models".into()));
    }
    if exp.config.prefix_sizes.is_empty() {
        return Err(Error::Config("snr requires prefix_sizes".into()));
    }
    let profiles = run_profiles(exp, &named_models(exp), &exp.config.prefix_sizes, jobs)?;

    let mut csv = provenance_line(exp);
    csv.push_str("prefix_size,pair,snr\n");
    for (pi, &size) in exp.config.prefix_sizes.iter().enumerate() {
        for a in 0..profiles.len() {
            for b in a + 1..profiles.len() {
                let est = bootstrap_snr(
                    &profiles[a].2[pi],
                    &profiles[b].2[pi],
                    exp.config.n_boot,
                    exp.config.seeds[0],
                    exp.config.resample,
                )?;
                writeln!(
                    csv,
                    "{},{}_vs_{},{}",
                    size, profiles[a].0, profiles[b].0, est.snr
                )
                .unwrap();
            }
        }
    }
    write_config_copy(exp, out_dir)?;
    Ok(vec![write_output(out_dir, "snr.csv", &csv)?])
}

/// `mdl`: prequential description lengths per model with seed and
/// schedule-resolution uncertainty, the per-label ledgers, and the pairwise
/// evidence table.
pub fn cmd_mdl(exp: &Experiment, out_dir: &Path, jobs: usize) -> Result<Vec<PathBuf>> {
    if exp.config.models.len() < 2 {
        return Err(Error::Config("mdl needs at least two models to compare".into()));
    }
    let schedule = exp
        .config
        .schedule_for(exp.pool.num_classes, exp.pool.len())?;
    let coarse = schedule.coarsened();
    let run_coarse = coarse.boundaries != schedule.boundaries;

    // Key: (model, replicate) where replicate seeds.len() marks the coarse run.
    type Key = (usize, usize);
    let mut tasks: Vec<(Key, Box<dyn FnOnce() -> Result<CodeLedger> + Send>)> = Vec::new();
    for (mi, m) in exp.config.models.iter().enumerate() {
        for (si, &seed) in exp.config.seeds.iter().enumerate() {
            let name = m.name.clone();
            let spec = m.spec.clone();
            let recipe = exp.recipe.clone();
            let pool = exp.pool.clone();
            let sched = schedule.clone();
            let calib_fraction = exp.config.calib_fraction;
            tasks.push((
                (mi, si),
                Box::new(move || {
                    prequential_run(&name, &spec, &recipe, &pool, &sched, calib_fraction, seed)
                }),
            ));
        }
        if run_coarse {
            let name = m.name.clone();
            let spec = m.spec.clone();
            let recipe = exp.recipe.clone();
            let pool = exp.pool.clone();
            let sched = coarse.clone();
            let calib_fraction = exp.config.calib_fraction;
            let seed = exp.config.seeds[0];
            tasks.push((
                (mi, exp.config.seeds.len()),
                Box::new(move || {
                    prequential_run(&name, &spec, &recipe, &pool, &sched, calib_fraction, seed)
                }),
            ));
        }
    }
    let results = run_keyed(jobs, tasks)?;

    write_config_copy(exp, out_dir)?;
    let mut written = Vec::new();
    let n_seeds = exp.config.seeds.len();
    let mut estimates = Vec::new();
    for (mi, m) in exp.config.models.iter().enumerate() {
        let mut per_seed = Vec::new();
        let mut coarse_total = None;
        for ((rmi, si), ledger) in &results {
            if *rmi != mi {
                continue;
            }
            if *si < n_seeds {
                per_seed.push(ledger.total_nats);
                let mut csv = provenance_line(exp);
                csv.push_str("block,n_train,example_index,nats\n");
                for e in &ledger.entries {
                    writeln!(csv, "{},{},{},{}", e.block, e.trained_on, e.example_index, e.nats)
                        .unwrap();
                }
                written.push(write_output(
                    out_dir,
                    &format!("ledger_{}_seed{}.csv", m.name, exp.config.seeds[*si]),
                    &csv,
                )?);
            } else {
                coarse_total = Some(ledger.total_nats);
            }
        }
        let (dl_nats, seed_std, schedule_std, uncertainty) =
            combine_replicates(&per_seed, coarse_total);
        estimates.push(DLEstimate {
            model_name: m.name.clone(),
            dataset_name: exp.pool.name.clone(),
            schedule: schedule.boundaries.clone(),
            dl_nats,
            per_seed,
            seed_std,
            schedule_std,
            uncertainty,
        });
    }

    let table = evidence_table(&estimates)?;
    // Lower-triangle layout mirroring the paper's evidence tables.
    let mut tri = provenance_line(exp);
    tri.push_str("model");
    for name in &table.models[..table.models.len() - 1] {
        write!(tri, ",{name}").unwrap();
    }
    tri.push('\n');
    for i in 1..table.models.len() {
        write!(tri, "{}", table.models[i]).unwrap();
        for j in 0..table.models.len() - 1 {
            if j < i {
                write!(tri, ",{} ± {}", table.delta[i][j], table.uncertainty[i][j]).unwrap();
            } else {
                tri.push(',');
            }
        }
        tri.push('\n');
    }
    written.push(write_output(out_dir, "evidence.csv", &tri)?);

    let mut long = provenance_line(exp);
    long.push_str("model_a,model_b,delta_nats,uncertainty,log10_bayes_factor\n");
    for i in 0..table.models.len() {
        for j in 0..table.models.len() {
            if i == j {
                continue;
            }
            writeln!(
                long,
                "{},{},{},{},{}",
                table.models[i],
                table.models[j],
                table.delta[i][j],
                table.uncertainty[i][j],
                log10_bayes_factor(table.delta[i][j])
            )
            .unwrap();
        }
    }
    written.push(write_output(out_dir, "evidence_long.csv", &long)?);

    #[derive(serde::Serialize)]
    struct Summary<'a> {
        config_hash: &'a str,
        seeds: &'a [u64],
        estimates: &'a [DLEstimate],
    }
    let summary = serde_json::to_string_pretty(&Summary {
        config_hash: &exp.config_hash,
        seeds: &exp.config.seeds,
        estimates: &estimates,
    })
    .map_err(|e| Error::Config(format!("summary serialization: {e}")))?;
    written.push(write_output(out_dir, "dl_summary.json", &summary)?);
    Ok(written)
}

/// `encode`: compress the pool's labels under the first named model.
pub fn cmd_encode(exp: &Experiment, out_dir: &Path, _jobs: usize) -> Result<Vec<PathBuf>> {
    let model = exp
        .config
        .models
        .first()
        .ok_or_else(|| Error::Config("encode needs a model".into()))?;
    let schedule = exp
        .config
        .schedule_for(exp.pool.num_classes, exp.pool.len())?;
    let (message, stats) = encode_dataset(
        &model.name,
        &model.spec,
        &exp.recipe,
        &exp.pool,
        &schedule,
        exp.config.calib_fraction,
        exp.config.seeds[0],
    )?;
    write_config_copy(exp, out_dir)?;
    let msg_path = write_binary(out_dir, "message.pqdl", &message.to_bytes()?)?;

    #[derive(serde::Serialize)]
    struct Stats<'a> {
        config_hash: &'a str,
        seeds: &'a [u64],
        model: &'a str,
        payload_bits: u64,
        shannon_bits: f64,
        dl_nats: f64,
        dl_bits: f64,
        num_blocks: usize,
        num_examples: usize,
    }
    let stats_json = serde_json::to_string_pretty(&Stats {
        config_hash: &exp.config_hash,
        seeds: &exp.config.seeds,
        model: &model.name,
        payload_bits: stats.payload_bits,
        shannon_bits: stats.shannon_bits,
        dl_nats: stats.dl_nats,
        dl_bits: stats.dl_nats / std::f64::consts::LN_2,
        num_blocks: stats.num_blocks,
        num_examples: exp.pool.len(),
    })
    .map_err(|e| Error::Config(format!("stats serialization: {e}")))?;
    let stats_path = write_output(out_dir, "encode_stats.json", &stats_json)?;
    Ok(vec![msg_path, stats_path])
}

/// `decode`: reconstruct labels from a message file plus the inputs named in
/// the config; errors if pool labels exist and disagree.
pub fn cmd_decode(
    exp: &Experiment,
    message_path: &Path,
    out_dir: &Path,
    _jobs: usize,
) -> Result<Vec<PathBuf>> {
    let bytes = fs::read(message_path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", message_path.display())))?;
    let message = EncodedMessage::from_bytes(&bytes)?;
    let labels = decode_dataset(&message, &exp.pool)?;

    let mut csv = provenance_line(exp);
    csv.push_str("index,label\n");
    for (i, l) in labels.iter().enumerate() {
        writeln!(csv, "{i},{l}").unwrap();
    }
    write_config_copy(exp, out_dir)?;
    let path = write_output(out_dir, "decoded_labels.csv", &csv)?;
    if exp.pool.labels != labels {
        return Err(Error::Codec(
            "decoded labels disagree with the dataset's labels".into(),
        ));
    }
    Ok(vec![path])
}

/// `width-sweep`: profile an MLP family over hidden widths; Fig.-style
/// model-size x data-size grid data.
pub fn cmd_width_sweep(exp: &Experiment, out_dir: &Path, jobs: usize) -> Result<Vec<PathBuf>> {
    let ws = exp
        .config
        .width_sweep
        .as_ref()
        .ok_or_else(|| Error::Config("config has no width_sweep section".into()))?;
    if exp.config.prefix_sizes.is_empty() {
        return Err(Error::Config("width-sweep requires prefix_sizes".into()));
    }
    let models: Vec<(String, ModelSpec)> = ws
        .widths
        .iter()
        .map(|&w| {
            let spec = ModelSpec {
                input_shape: exp.pool.input_shape,
                num_classes: exp.pool.num_classes,
                layers: (0..ws.depth)
                    .map(|_| LayerSpec::Dense {
                        width: w,
                        activation: Activation::Relu,
                    })
                    .collect(),
            };
            (format!("mlp_w{w}"), spec)
        })
        .collect();
    let profiles = run_profiles(exp, &models, &exp.config.prefix_sizes, jobs)?;

    let mut long = provenance_line(exp);
    long.push_str("width,prefix_size,seed,nats,error_rate\n");
    let mut summary = provenance_line(exp);
    summary.push_str("width,prefix_size,mean_nats,std_nats,mean_err,std_err\n");
    for ((_, points, _), &width) in profiles.iter().zip(&ws.widths) {
        for p in points {
            for (si, &seed) in exp.config.seeds.iter().enumerate() {
                writeln!(
                    long,
                    "{},{},{},{},{}",
                    width, p.prefix_size, seed, p.per_seed_nats[si], p.per_seed_err[si]
                )
                .unwrap();
            }
            writeln!(
                summary,
                "{},{},{},{},{},{}",
                width, p.prefix_size, p.mean_nats, p.std_nats, p.mean_err, p.std_err
            )
            .unwrap();
        }
    }
    write_config_copy(exp, out_dir)?;
    Ok(vec![
        write_output(out_dir, "width_sweep.csv", &long)?,
        write_output(out_dir, "width_sweep_summary.csv", &summary)?,
    ])
}

