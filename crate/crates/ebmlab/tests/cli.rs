//! End-to-end checks of the command-line interface: exit codes, output
//! files, determinism and schema round-trips.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ebmlab")
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ebmlab_cli_{}_{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary should launch")
}

const TINY_TRAIN: &str = "\
trial = Ibc
epochs = 2
seed = 5
task.kind = two_mode
task.noise = 0.05
task.train_rows = 48
task.val_rows = 12
task.seed = 6
batch_size = 24
negatives = 4
hidden = 16,16
infer_chain.num_chains = 4
";

#[test]
fn gen_then_eval_roundtrip_and_train() {
    let dir = tmp("roundtrip");
    let gen_cfg = dir.join("gen.cfg");
    write(
        &gen_cfg,
        "task.kind = two_mode\ntask.noise = 0.05\ntask.train_rows = 32\ntask.val_rows = 8\ntask.seed = 3\n",
    );
    let data_dir = dir.join("data");
    let out = run(&["gen", "--config", gen_cfg.to_str().unwrap(), "--out", data_dir.to_str().unwrap()]);
    assert!(out.status.success(), "gen failed: {}", String::from_utf8_lossy(&out.stderr));
    assert!(data_dir.join("train.csv").exists());
    assert!(data_dir.join("validation.csv").exists());
    let train = ebmlab::data::load_dataset(&data_dir.join("train.csv")).unwrap();
    assert_eq!(train.len(), 32);

    // Train a tiny model, then evaluate its checkpoint on the generated
    // validation file via a model-format checkpoint.
    let train_cfg = dir.join("train.cfg");
    write(&train_cfg, TINY_TRAIN);
    let run_dir = dir.join("run");
    let out = run(&[
        "train",
        "--quiet",
        "--config",
        train_cfg.to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "train failed: {}", String::from_utf8_lossy(&out.stderr));
    assert!(run_dir.join("metrics.csv").exists());
    assert!(run_dir.join("checkpoint.txt").exists());
    assert!(run_dir.join("summary.csv").exists());
    let metrics = std::fs::read_to_string(run_dir.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3, "header + one line per epoch");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn train_metrics_are_byte_identical_across_reruns() {
    let dir = tmp("determinism");
    let cfg = dir.join("train.cfg");
    write(&cfg, TINY_TRAIN);
    let mut outputs = vec![];
    for name in ["a", "b"] {
        let out_dir = dir.join(name);
        let out = run(&[
            "train",
            "--quiet",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(std::fs::read(out_dir.join("metrics.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1], "reruns must produce identical metrics bytes");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn invalid_trial_name_exits_2_listing_names() {
    let dir = tmp("badtrial");
    let cfg = dir.join("train.cfg");
    write(&cfg, "trial = Bogus\nepochs = 1\ntask.kind = two_mode\n");
    let out = run(&["train", "--config", cfg.to_str().unwrap(), "--out", dir.join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for name in ["Ibc", "Ibc_MAS", "Correct_MAS", "Correct_MAS_MaxEnt"] {
        assert!(err.contains(name), "stderr should list {name}: {err}");
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tmp("badkey");
    let cfg = dir.join("train.cfg");
    write(&cfg, "trial = Ibc\nepochs = 1\ntask.kind = two_mode\nmystery_knob = 3\n");
    let out = run(&["train", "--config", cfg.to_str().unwrap(), "--out", dir.join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mystery_knob"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn diagnose_writes_expected_row_counts() {
    let dir = tmp("diag");
    let cfg = dir.join("diag.cfg");
    write(&cfg, "seed = 2\niterations = 400\ndiscard = 300\n");
    let out_dir = dir.join("out");
    let out = run(&["diagnose", "--quiet", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let samples = std::fs::read_to_string(out_dir.join("samples.csv")).unwrap();
    // header + (retained samples x formulations)
    assert_eq!(samples.lines().count(), 1 + 2 * 100);
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3, "header + one row per formulation");
    assert!(summary.lines().nth(1).unwrap().starts_with("correct,"));
    assert!(summary.lines().nth(2).unwrap().starts_with("ibc,"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn eval_reports_aggregate_matching_rows() {
    let dir = tmp("eval");
    // Build a model checkpoint directly (model format, not trainer format).
    let net = ebmlab::nn::DenseEnergyNet::init(&[2, 8, 1], 0.05, 3).unwrap();
    let model = ebmlab::model::ConditionalEbm::new(
        net,
        ebmlab::model::Normalizer::identity(1),
        ebmlab::model::Normalizer::identity(1),
    )
    .unwrap();
    let ckpt = dir.join("model.txt");
    ebmlab::checkpoint::save_model(&ckpt, &model, 3).unwrap();

    let task = ebmlab::data::TaskSpec {
        kind: ebmlab::data::GeneratorKind::TwoMode,
        obs_dim: 1,
        act_dim: 1,
        noise: 0.0,
        train_rows: 20,
        val_rows: 10,
        seed: 4,
    };
    let (_, val) = ebmlab::data::generate(&task).unwrap();
    let ds_path = dir.join("val.csv");
    ebmlab::data::save_dataset(&val, &ds_path).unwrap();

    let cfg = dir.join("eval.cfg");
    write(&cfg, "task.kind = two_mode\nseed = 9\ninfer_chain.num_chains = 4\n");
    let out_dir = dir.join("out");
    let out = run(&[
        "eval",
        "--quiet",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--dataset",
        ds_path.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = std::fs::read_to_string(out_dir.join("eval_rows.csv")).unwrap();
    let mut successes = 0usize;
    let mut count = 0usize;
    for line in rows.lines().skip(1) {
        count += 1;
        if line.ends_with(",1") {
            successes += 1;
        }
    }
    assert_eq!(count, 10);
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    let last = summary.lines().nth(1).unwrap();
    let rate: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
    assert!(
        (rate - successes as f64 / 10.0).abs() < 1e-12,
        "aggregate {rate} vs per-row mean {}",
        successes as f64 / 10.0
    );
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn eval_rejects_empty_dataset() {
    let dir = tmp("evalempty");
    let net = ebmlab::nn::DenseEnergyNet::zeros(&[2, 4, 1]).unwrap();
    let model = ebmlab::model::ConditionalEbm::new(
        net,
        ebmlab::model::Normalizer::identity(1),
        ebmlab::model::Normalizer::identity(1),
    )
    .unwrap();
    let ckpt = dir.join("model.txt");
    ebmlab::checkpoint::save_model(&ckpt, &model, 1).unwrap();
    let ds_path = dir.join("empty.csv");
    write(&ds_path, "obs_dim,act_dim,split\n1,1,validation\nx_1,y_1\n");
    let cfg = dir.join("eval.cfg");
    write(&cfg, "task.kind = two_mode\n");
    let out = run(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--dataset",
        ds_path.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.join("out").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no rows"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn seed_flag_overrides_config_seed() {
    let dir = tmp("seedflag");
    let cfg = dir.join("gen.cfg");
    write(&cfg, "task.kind = two_mode\ntask.train_rows = 8\ntask.val_rows = 4\ntask.seed = 1\n");
    let a = dir.join("a");
    let b = dir.join("b");
    let c = dir.join("c");
    for (out_dir, seed) in [(&a, None), (&b, Some("1")), (&c, Some("2"))] {
        let mut args = vec!["gen", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()];
        if let Some(s) = seed {
            args.push("--seed");
            args.push(s);
        }
        assert!(run(&args).status.success());
    }
    let bytes = |d: &Path| std::fs::read(d.join("train.csv")).unwrap();
    assert_eq!(bytes(&a), bytes(&b), "explicit seed equal to config seed is a no-op");
    assert_ne!(bytes(&a), bytes(&c), "different seed changes the data");
    std::fs::remove_dir_all(&dir).ok();
}
