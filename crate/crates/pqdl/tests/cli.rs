//! End-to-end checks of the `pqdl` binary: exit codes, file formats,
//! reproducibility.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pqdl() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pqdl"))
}

fn small_config() -> String {
    r#"{
        "dataset": {"synth": {"num_classes": 2, "dim": 4, "train_per_class": 32,
                     "eval_per_class": 16, "separation": 4.0, "seed": 7}},
        "models": [
            {"name": "logreg", "spec": {"input_shape": {"flat": 4}, "num_classes": 2, "layers": []}},
            {"name": "mlp8", "spec": {"input_shape": {"flat": 4}, "num_classes": 2,
              "layers": [{"dense": {"width": 8, "activation": "relu"}}]}}
        ],
        "optimizer": {"kind": "adam", "epochs": 8, "batch_size": 16,
                      "learning_rate_candidates": [0.001]},
        "calib": {"train_steps_per_calib_step": 10, "calib_batch_size": 16,
                  "calib_lr": 0.01, "refine_steps": 50},
        "prefix_sizes": [8, 32],
        "seeds": [1, 2],
        "n_boot": 200
    }"#
    .to_string()
}

fn write_config(dir: &Path, contents: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, contents).unwrap();
    path
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "command failed: {}\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn missing_config_field_exits_one_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"models": [], "seeds": [1]}"#);
    let out = pqdl()
        .args(["train", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("dataset"), "stderr: {stderr}");
}

#[test]
fn train_writes_history_with_contracted_header() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let out_dir = dir.path().join("out");
    run_ok(pqdl().args(["train", "--config"]).arg(&config).arg("--out").arg(&out_dir));

    let history = fs::read_to_string(out_dir.join("train_mlp8_seed1.csv")).unwrap();
    let mut lines = history.lines();
    let provenance = lines.next().unwrap();
    assert!(provenance.starts_with("# pqdl config="));
    assert!(provenance.contains("seeds=1,2"));
    assert_eq!(
        lines.next().unwrap(),
        "step,train_nats,calib_nats_raw,calib_nats_cal,calib_err"
    );
    assert!(lines.next().is_some());

    let blob = fs::read(out_dir.join("params_mlp8_seed1.pqpm")).unwrap();
    assert_eq!(&blob[..4], b"PQPM");
    // Copy of the config for provenance.
    assert_eq!(fs::read_to_string(out_dir.join("config.json")).unwrap(), small_config());
}

#[test]
fn reruns_are_byte_identical_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    run_ok(pqdl().args(["profile", "--jobs", "1", "--config"]).arg(&config).arg("--out").arg(&out_a));
    run_ok(pqdl().args(["profile", "--jobs", "2", "--config"]).arg(&config).arg("--out").arg(&out_b));
    for name in ["profile.csv", "profile_summary.csv"] {
        let a = fs::read(out_a.join(name)).unwrap();
        let b = fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
    }
}

#[test]
fn encode_then_decode_recovers_labels() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let out_enc = dir.path().join("enc");
    run_ok(pqdl().args(["encode", "--config"]).arg(&config).arg("--out").arg(&out_enc));
    let message = out_enc.join("message.pqdl");
    assert!(message.exists());

    let out_dec = dir.path().join("dec");
    run_ok(
        pqdl()
            .args(["decode", "--config"])
            .arg(&config)
            .arg("--message")
            .arg(&message)
            .arg("--out")
            .arg(&out_dec),
    );
    let decoded = fs::read_to_string(out_dec.join("decoded_labels.csv")).unwrap();
    // 64 labels + provenance + header.
    assert_eq!(decoded.lines().count(), 66);

    // A corrupted message is a runtime failure: exit 2.
    let mut bytes = fs::read(&message).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x55;
    let bad = dir.path().join("bad.pqdl");
    fs::write(&bad, &bytes).unwrap();
    let out = pqdl()
        .args(["decode", "--config"])
        .arg(&config)
        .arg("--message")
        .arg(&bad)
        .arg("--out")
        .arg(dir.path().join("dec2"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn mdl_of_identical_specs_has_zero_evidence_cell() {
    let dir = tempfile::tempdir().unwrap();
    // Two names, same architecture: their description lengths must agree
    // exactly, so the evidence cell is 0.
    let config = write_config(
        dir.path(),
        &small_config().replace(
            r#"{"name": "mlp8", "spec": {"input_shape": {"flat": 4}, "num_classes": 2,
              "layers": [{"dense": {"width": 8, "activation": "relu"}}]}}"#,
            r#"{"name": "logreg2", "spec": {"input_shape": {"flat": 4}, "num_classes": 2, "layers": []}}"#,
        ),
    );
    let out_dir = dir.path().join("out");
    run_ok(pqdl().args(["mdl", "--jobs", "2", "--config"]).arg(&config).arg("--out").arg(&out_dir));

    let long = fs::read_to_string(out_dir.join("evidence_long.csv")).unwrap();
    let row = long
        .lines()
        .find(|l| l.starts_with("logreg,logreg2"))
        .expect("pair row present");
    let delta: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
    assert_eq!(delta, 0.0, "identical specs must code identically");

    // Ledgers exist per (model, seed).
    assert!(out_dir.join("ledger_logreg_seed1.csv").exists());
    assert!(out_dir.join("ledger_logreg2_seed2.csv").exists());
    assert!(out_dir.join("dl_summary.json").exists());
}

#[test]
fn snr_csv_has_contracted_columns() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let out_dir = dir.path().join("out");
    run_ok(pqdl().args(["snr", "--jobs", "2", "--config"]).arg(&config).arg("--out").arg(&out_dir));
    let csv = fs::read_to_string(out_dir.join("snr.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# pqdl config="));
    assert_eq!(lines.next().unwrap(), "prefix_size,pair,snr");
    let first = lines.next().unwrap();
    assert!(first.starts_with("8,logreg_vs_mlp8,"), "{first}");
}

#[test]
fn width_sweep_runs_and_reports_all_widths() {
    let dir = tempfile::tempdir().unwrap();
    let mut config: serde_json::Value = serde_json::from_str(&small_config()).unwrap();
    config["width_sweep"] = serde_json::json!({"widths": [4, 16], "depth": 1});
    config["models"] = serde_json::json!([]);
    let config = write_config(dir.path(), &serde_json::to_string(&config).unwrap());
    let out_dir = dir.path().join("out");
    run_ok(pqdl().args(["width-sweep", "--jobs", "2", "--config"]).arg(&config).arg("--out").arg(&out_dir));
    let csv = fs::read_to_string(out_dir.join("width_sweep_summary.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("4,")));
    assert!(csv.lines().any(|l| l.starts_with("16,")));
}

#[test]
fn out_dir_env_var_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let out_dir = dir.path().join("from-env");
    run_ok(
        pqdl()
            .env("PQDL_OUT", &out_dir)
            .current_dir(dir.path())
            .args(["train", "--config"])
            .arg(&config),
    );
    assert!(out_dir.join("config.json").exists());
}

#[test]
fn seed_offset_changes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    run_ok(pqdl().args(["train", "--config"]).arg(&config).arg("--out").arg(&out_a));
    run_ok(pqdl().args(["train", "--seed-offset", "10", "--config"]).arg(&config).arg("--out").arg(&out_b));
    let a = fs::read(out_a.join("train_logreg_seed1.csv")).unwrap();
    assert!(out_b.join("train_logreg_seed11.csv").exists());
    let b = fs::read(out_b.join("train_logreg_seed11.csv")).unwrap();
    assert_ne!(a, b);
}
