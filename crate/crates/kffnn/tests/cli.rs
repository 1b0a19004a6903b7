use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kffnn::jsonl::{load_jsonl, save_jsonl};
use kffnn::model_io::save_model;
use kffnn_core::dataset::{generate_synthetic, Dataset, SyntheticSpec};
use kffnn_core::{Envelope, FfnnModel, Matrix, OutputActivation, Rng, RnnModel, TrainedModel};

fn kffnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kffnn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_dataset(dir: &Path, name: &str, spec: SyntheticSpec) -> PathBuf {
    let path = dir.join(name);
    save_jsonl(&generate_synthetic(&spec).unwrap(), &path).unwrap();
    path
}

#[test]
fn generate_writes_one_line_per_clip_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    for p in [&a, &b] {
        let out = kffnn(&["generate", "--count", "1000", "--seed", "9", "--out", s(p)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let stdout = String::from_utf8(out.stdout).unwrap();
        assert!(stdout.starts_with("1000 clips"), "{stdout}");
        assert!(stdout.contains("[4, 5]"));
    }
    let text = fs::read(&a).unwrap();
    assert_eq!(text.iter().filter(|c| **c == b'\n').count(), 1000);
    assert_eq!(text, fs::read(&b).unwrap());
    let ds = load_jsonl(&a).unwrap();
    assert_eq!(ds.meta.as_ref().unwrap().seed, 9);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.jsonl");
    assert_eq!(code(&kffnn(&["generate", "--dim", "0", "--out", s(&out)])), 2);
    assert!(!out.exists());
    assert_eq!(code(&kffnn(&["generate", "--envelope", "fn7", "--out", s(&out)])), 2);
    assert_eq!(code(&kffnn(&["gradcheck", "bogus"])), 2);
    assert_eq!(code(&kffnn(&["frobnicate"])), 2);
    assert_eq!(code(&kffnn(&[])), 2);
    assert_eq!(code(&kffnn(&["--help"])), 0);
}

#[test]
fn gradcheck_reports_and_stamps() {
    let dir = tempfile::tempdir().unwrap();
    let out = kffnn(&["gradcheck", "rnn", "10", "--stamp", s(dir.path())]);
    assert_eq!(code(&out), 0);
    let line = String::from_utf8(out.stdout).unwrap();
    assert!(line.starts_with("rnn trials=10 seed=1 passed"), "{line}");
    let stamp = fs::read_to_string(dir.path().join("gradcheck.txt")).unwrap();
    assert_eq!(stamp.trim(), line.trim());
    assert_eq!(code(&kffnn(&["gradcheck", "blstm", "3"])), 0);
}

/// A dataset whose labels are exactly what `model` predicts for each clip.
fn perfect_fixture(dir: &Path, model: &TrainedModel, env: Option<&Envelope>) -> PathBuf {
    let spec = SyntheticSpec { count: 15, feature_dim: 4, seed: 3, ..SyntheticSpec::default() };
    let mut ds = generate_synthetic(&spec).unwrap();
    for clip in &mut ds.clips {
        clip.label = model.predict_clip(clip, env).unwrap();
    }
    let ds = Dataset::new(ds.clips).unwrap();
    let path = dir.join("perfect.jsonl");
    save_jsonl(&ds, &path).unwrap();
    path
}

fn read_predictions(out: &Output) -> Vec<(String, f64, f64)> {
    String::from_utf8(out.stdout.clone())
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn predict_reproduces_a_perfect_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = Rng::new(8);
    let rnn: TrainedModel = RnnModel::new(
        Matrix::random_uniform(4, 3, 0.5, &mut rng),
        Matrix::random_uniform(3, 3, 0.5, &mut rng),
        Matrix::random_uniform(3, 1, 2.0, &mut rng),
        1.0,
        OutputActivation::Linear,
    )
    .unwrap()
    .into();
    let model_path = dir.path().join("rnn.model");
    save_model(&rnn, &model_path).unwrap();
    let data = perfect_fixture(dir.path(), &rnn, None);
    let out = kffnn(&["predict", "--model", s(&model_path), "--data", s(&data)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_predictions(&out);
    assert_eq!(rows.len(), 15);
    for (_, truth, pred) in &rows {
        assert_eq!(truth.to_bits(), pred.to_bits());
    }

    let out = kffnn(&["evaluate", "--model", s(&model_path), "--data", s(&data)]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().nth(1).unwrap(), "rnn,0,1,15");
}

#[test]
fn feed_forward_prediction_needs_an_envelope() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = Rng::new(9);
    let ffnn: TrainedModel = FfnnModel::new(
        Matrix::random_uniform(4, 3, 0.5, &mut rng),
        Matrix::random_uniform(3, 1, 2.0, &mut rng),
        1.0,
        OutputActivation::Linear,
    )
    .unwrap()
    .into();
    let model_path = dir.path().join("ffnn.model");
    save_model(&ffnn, &model_path).unwrap();
    let data = perfect_fixture(dir.path(), &ffnn, Some(&Envelope::Fn2));
    let out = kffnn(&["predict", "--model", s(&model_path), "--data", s(&data)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--envelope"));
    let out = kffnn(&["predict", "-m", s(&model_path), "-d", s(&data), "--envelope", "fn2"]);
    assert_eq!(code(&out), 0);
    for (_, truth, pred) in read_predictions(&out) {
        assert_eq!(truth.to_bits(), pred.to_bits());
    }
}

#[test]
fn missing_or_mismatched_inputs_fail() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path(), "d.jsonl", SyntheticSpec { count: 5, feature_dim: 3, ..SyntheticSpec::default() });
    let missing = dir.path().join("nope.model");
    let out = kffnn(&["predict", "--model", s(&missing), "--data", s(&data)]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.model"));

    let model = dir.path().join("m.model");
    let wide: TrainedModel = RnnModel::zeros(5, 2, 1.0, OutputActivation::Linear).unwrap().into();
    save_model(&wide, &model).unwrap();
    assert_eq!(code(&kffnn(&["predict", "--model", s(&model), "--data", s(&data)])), 2);

    fs::write(dir.path().join("bad.jsonl"), "{\"id\":\"a\",\"label\":1,\"segments\":[[1,2,3]]}\n{oops\n").unwrap();
    let out = kffnn(&["predict", "--model", s(&model), "--data", s(&dir.path().join("bad.jsonl"))]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.jsonl:2"));
}

#[test]
fn train_then_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path(), "d.jsonl", SyntheticSpec { count: 30, feature_dim: 5, ..SyntheticSpec::default() });
    for system in ["kffnn-fn1", "ffnn", "rnn", "lstm", "blstm"] {
        let model = dir.path().join(format!("{system}.model"));
        let out = kffnn(&[
            "train", "--data", s(&data), "--system", system, "--out", s(&model), "--epochs", "3", "--hidden", "4",
        ]);
        assert_eq!(code(&out), 0, "{system}: {}", String::from_utf8_lossy(&out.stderr));
        let mut args = vec!["evaluate", "--model", s(&model), "--data", s(&data)];
        if system.contains("ffnn") {
            args.extend(["--envelope", if system == "ffnn" { "constant" } else { "fn1" }]);
        }
        let out = kffnn(&args);
        assert_eq!(code(&out), 0, "{system}");
    }
    let out = kffnn(&["train", "--data", s(&data), "--system", "rnn", "--envelope", "fn1", "--out", "x"]);
    assert_eq!(code(&out), 2);
    let out = kffnn(&["train", "--data", s(&data), "--system", "kffnn-fn1", "--envelope", "0.5,1", "--out", "x"]);
    assert_eq!(code(&out), 1, "custom envelope shorter than the clips");
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn sweep_counts_rows_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{
            "dataset": {"generate": {"count": 80, "feature_dim": 5, "seed": 2}},
            "systems": ["ffnn", "kffnn-fn1", "rnn"],
            "train_sizes": [20, 40],
            "seeds": [0, 1, 2, 3, 4],
            "split": {"test_count": 10},
            "train": {"epochs": 3, "hidden": 4}
        }"#,
    );
    let outdir = dir.path().join("out");
    let out = kffnn(&["sweep", "--config", s(&cfg), "--output-dir", s(&outdir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let results = fs::read_to_string(outdir.join("results.csv")).unwrap();
    let lines: Vec<&str> = results.lines().collect();
    assert_eq!(lines[0], "system,train_size,seed,mse,pcc,n_test");
    assert_eq!(lines.len(), 31);
    assert!(lines[1].starts_with("ffnn,20,0,"));
    assert!(lines[30].starts_with("rnn,40,4,") && lines[30].ends_with(",10"));
    let agg = fs::read_to_string(outdir.join("aggregate.csv")).unwrap();
    assert_eq!(agg.lines().count(), 7);
    let echoed: serde_json::Value = serde_json::from_str(&fs::read_to_string(outdir.join("config.json")).unwrap()).unwrap();
    assert_eq!(echoed["output_dir"], serde_json::json!(outdir));
    let stamp = fs::read_to_string(outdir.join("gradcheck.txt")).unwrap();
    assert!(stamp.lines().any(|l| l.starts_with("ffnn trials=100") && l.contains("passed")));
    assert!(stamp.lines().any(|l| l.starts_with("rnn trials=100") && l.contains("passed")));
}

#[test]
fn sweep_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"dataset": {"generate": {"count": 40, "feature_dim": 3}}, "train_sizes": [10], "systems": ["rnn"], "split": {"test_count": 5}}"#,
    );
    let outdir = dir.path().join("o");
    let out = kffnn(&[
        "sweep", "-c", s(&cfg), "--output-dir", s(&outdir), "--force", "--seeds", "7", "--epochs", "2",
        "--systems", "kffnn-fn2,lstm", "--select-hidden",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!outdir.join("gradcheck.txt").exists());
    let results = fs::read_to_string(outdir.join("results.csv")).unwrap();
    let systems: Vec<&str> = results.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(systems, ["kffnn-fn2", "lstm"]);
    assert!(results.lines().skip(1).all(|l| l.split(',').nth(2) == Some("7")));
    let selection = fs::read_to_string(outdir.join("selection.csv")).unwrap();
    assert_eq!(selection.lines().count(), 3);
    let echoed = fs::read_to_string(outdir.join("config.json")).unwrap();
    assert!(echoed.contains("\"epochs\": 2"));

    let out = kffnn(&["sweep", "-c", s(&cfg), "--output-dir", s(&outdir), "--sizes", "36"]);
    assert_eq!(code(&out), 2, "size larger than the pool");
}

#[test]
fn sweep_records_divergence_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"dataset": {"generate": {"count": 40, "feature_dim": 3}}, "train_sizes": [10], "systems": ["ffnn", "rnn"],
            "seeds": [0, 1], "split": {"test_count": 5}, "train": {"eta": 50.0, "epochs": 100}}"#,
    );
    let outdir = dir.path().join("o");
    let out = kffnn(&["sweep", "-c", s(&cfg), "--output-dir", s(&outdir), "--force"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let results = fs::read_to_string(outdir.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 5);
    assert!(results.contains(",diverged,diverged,5"), "{results}");
}
