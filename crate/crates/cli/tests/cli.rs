//! Runs the `bifi` binary end to end on small configurations.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use bifi_cli::RunConfig;
use bifi_core::bifidelity::{load_model, load_operator, load_stored_model, ConfigLabel};
use bifi_core::data::{Target, TargetLabel, Trajectory, TripletDataset};
use bifi_core::metrics::REPORT_HEADER;

const SMALL: &str = r#"
seed = 5
[data]
n_coarse = 20
n_fine = 10
q = 40
[low]
max_epochs = 5
[low.warm_start]
epochs = 5
[residual]
max_epochs = 5
[residual.warm_start]
epochs = 5
"#;

fn bifi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bifi"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn bifi")
}

fn ok(args: &[&str]) -> String {
    let out = bifi(args);
    assert!(
        out.status.success(),
        "bifi {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = bifi(args);
    assert!(!out.status.success(), "bifi {args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    if dir.exists() {
        fs::remove_dir_all(&dir).unwrap();
    }
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.toml");
    fs::write(&path, SMALL).unwrap();
    path
}

/// Rows per trajectory and number of trajectories of a `u,t,value` file.
fn shape(path: &Path) -> (usize, usize) {
    let ds = TripletDataset::load(path, TargetLabel::Drag).unwrap();
    (ds.num_trajectories(), ds.q())
}

/// A small PP drag model trained once and shared by the tests below.
fn trained() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = scratch("trained");
        let cfg = small_config(&dir);
        let out = dir.join("out");
        for cmd in ["generate", "train-low", "train-residual"] {
            ok(&[cmd, "--config", s(&cfg), "--out", s(&out)]);
        }
        out
    })
}

#[test]
fn generate_defaults_match_the_study_layout() {
    let out = scratch("generate_default");
    let stdout = ok(&["generate", "--out", s(&out)]);
    assert!(stdout.contains("150 coarse and 50 fine"), "{stdout}");
    assert_eq!(shape(&out.join("coarse.csv")), (150, 300));
    assert_eq!(shape(&out.join("fine.csv")), (50, 300));
}

#[test]
fn generate_q_sets_rows_per_trajectory() {
    let out = scratch("generate_q");
    ok(&["generate", "--out", s(&out), "--q", "10", "--n-coarse", "4", "--n-fine", "3"]);
    assert_eq!(shape(&out.join("coarse.csv")), (4, 10));
    assert_eq!(shape(&out.join("fine.csv")), (3, 10));
}

#[test]
fn generate_is_deterministic_per_seed() {
    let dir = scratch("generate_seed");
    let run = |name: &str, seed: &str| {
        let out = dir.join(name);
        ok(&["generate", "--out", s(&out), "--seed", seed, "--q", "20", "--target", "lift"]);
        (fs::read(out.join("coarse.csv")).unwrap(), fs::read(out.join("fine.csv")).unwrap())
    };
    let a = run("a", "11");
    assert_eq!(a, run("b", "11"));
    assert_ne!(a, run("c", "12"));
}

#[test]
fn flags_override_config_and_config_is_echoed() {
    let dir = scratch("echo");
    let cfg = small_config(&dir);
    let out = dir.join("out");
    ok(&["generate", "--config", s(&cfg), "--out", s(&out), "--seed", "9", "--q", "12"]);
    let echoed = RunConfig::load(&out.join("config_generate.toml")).unwrap();
    assert_eq!(echoed.seed, 9);
    assert_eq!(echoed.data.q, 12);
    assert_eq!(echoed.data.n_coarse, 20);
    assert_eq!(echoed.out, out);
    assert_eq!(echoed.data.coarse, Some(out.join("coarse.csv")));
    assert!(echoed.generator.is_some());
}

#[test]
fn both_variants_train_loadable_low_models() {
    let dir = scratch("variants");
    let cfg = small_config(&dir);
    let data = dir.join("data");
    ok(&["generate", "--config", s(&cfg), "--out", s(&data)]);
    for (variant, trunk) in [("physics", "fourier"), ("data", "vanilla"), ("physics_guided", "vanilla"), ("data_driven", "fourier")] {
        let out = dir.join(format!("{variant}_{trunk}"));
        ok(&[
            "train-low",
            "--config",
            s(&cfg),
            "--out",
            s(&out),
            "--coarse",
            s(&data.join("coarse.csv")),
            "--variant",
            variant,
            "--trunk",
            trunk,
        ]);
        let stored = load_operator(&out.join("low_model.json")).unwrap();
        assert_eq!(stored.target, Target::Drag);
        let log = fs::read_to_string(out.join("low_training_log.csv")).unwrap();
        assert!(log.starts_with("epoch,train_loss,val_loss,lr\n"), "{log}");
        assert_eq!(shape(&out.join("coarse_test.csv")).0, 2);
    }
}

#[test]
fn each_configuration_label_is_reachable_from_flags() {
    let dir = scratch("labels");
    let cfg = small_config(&dir);
    let data = dir.join("data");
    ok(&["generate", "--config", s(&cfg), "--out", s(&data)]);
    let common = |out: &Path| -> Vec<String> {
        vec![
            "--config".into(),
            s(&cfg).into(),
            "--out".into(),
            s(out).into(),
            "--coarse".into(),
            s(&data.join("coarse.csv")).into(),
        ]
    };
    for (low, residual, label) in [
        ("physics", "physics", ConfigLabel::PP),
        ("data", "physics", ConfigLabel::DP),
        ("data", "data", ConfigLabel::DD),
        ("physics", "data", ConfigLabel::PD),
    ] {
        let out = dir.join(label.as_str());
        let mut args = vec!["train-low".to_string(), "--variant".into(), low.into()];
        args.extend(common(&out));
        ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
        let fine = data.join("fine.csv");
        ok(&[
            "train-residual",
            "--config",
            s(&cfg),
            "--out",
            s(&out),
            "--fine",
            s(&fine),
            "--variant",
            residual,
        ]);
        assert_eq!(load_model(&out.join("model.json")).unwrap().config_label, label);
        assert!(out.join("residual_training_log.csv").exists());
    }
}

#[test]
fn zero_residual_data_gives_a_near_zero_residual_operator() {
    let dir = scratch("zero_residual");
    let cfg = small_config(&dir);
    let out = dir.join("out");
    ok(&["generate", "--config", s(&cfg), "--out", s(&out)]);
    ok(&["train-low", "--config", s(&cfg), "--out", s(&out), "--variant", "data"]);
    // Replace the fine data with the low-fidelity model's own output.
    let low = load_operator(&out.join("low_model.json")).unwrap().operator;
    let fine = TripletDataset::load(&out.join("fine.csv"), TargetLabel::Drag).unwrap();
    let trajectories = fine
        .trajectories()
        .iter()
        .map(|tr| Trajectory {
            u_bar: tr.u_bar,
            times: tr.times.clone(),
            values: low.predict_trajectory(tr.u_bar, &tr.times).unwrap(),
        })
        .collect();
    TripletDataset::new(trajectories, TargetLabel::Drag, 0.0, 8.0)
        .unwrap()
        .save(&out.join("fine.csv"))
        .unwrap();
    ok(&["train-residual", "--config", s(&cfg), "--out", s(&out)]);
    let model = load_model(&out.join("model.json")).unwrap();
    let times: Vec<f64> = (0..=160).map(|j| 0.05 * j as f64).collect();
    for k in 0..=20 {
        let u = 0.9 + 0.01 * k as f64;
        for r in model.residual.predict_trajectory(u, &times).unwrap() {
            assert!(r.abs() < 0.01, "residual {r} at u = {u}");
        }
    }
}

#[test]
fn missing_input_is_a_clear_error() {
    let dir = scratch("missing");
    let missing = dir.join("nope.csv");
    let err = fails(&["train-low", "--out", s(&dir), "--coarse", s(&missing), "--epochs", "1"]);
    assert!(err.contains("nope.csv"), "{err}");
    let err = fails(&["evaluate", "--out", s(&dir), "--model", s(&dir.join("absent.json"))]);
    assert!(err.contains("absent.json"), "{err}");
}

#[test]
fn invalid_flags_are_named() {
    let dir = scratch("flags");
    let err = fails(&["train-low", "--out", s(&dir), "--variant", "hybrid"]);
    assert!(err.contains("--variant"), "{err}");
    let err = fails(&["train-low", "--out", s(&dir), "--trunk", "wavelet"]);
    assert!(err.contains("--trunk"), "{err}");
    let err = fails(&["train-low", "--out", s(&dir), "--epochs", "0"]);
    assert!(err.contains("--epochs"), "{err}");
    let err = fails(&["generate", "--out", s(&dir), "--q", "1"]);
    assert!(err.contains("--q"), "{err}");
    let err = fails(&["predict", "--out", s(&dir), "--t0", "5", "--tf", "1"]);
    assert!(err.contains("--t0"), "{err}");
    let err = fails(&["generate", "--out", s(&dir), "--target", "torque"]);
    assert!(err.contains("--target"), "{err}");
    let bad = dir.join("bad.toml");
    fs::write(&bad, "[low]\nepochs = 3\n").unwrap();
    let err = fails(&["generate", "--config", s(&bad), "--out", s(&dir)]);
    assert!(err.contains("epochs"), "{err}");
}

#[test]
fn normalization_mismatch_is_rejected() {
    let dir = scratch("normalization");
    let low = trained().join("low_model.json");
    let cfg = dir.join("cfg.toml");
    fs::write(
        &cfg,
        format!("{SMALL}\n[residual.normalization]\nu_center = 1.0\nu_scale = 0.2\nt_offset = 0.0\nt_scale = 8.0\n"),
    )
    .unwrap();
    let err = fails(&[
        "train-residual",
        "--config",
        s(&cfg),
        "--out",
        s(&dir),
        "--low-model",
        s(&low),
        "--fine",
        s(&trained().join("fine.csv")),
    ]);
    assert!(err.contains("normalization"), "{err}");
}

#[test]
fn corrupt_model_file_names_the_field() {
    let dir = scratch("corrupt");
    let text = fs::read_to_string(trained().join("model.json")).unwrap();
    let corrupt = dir.join("model.json");
    fs::write(&corrupt, text.replacen("\"config_label\":\"PP\"", "\"config_label\":7", 1)).unwrap();
    let err = fails(&["predict", "--out", s(&dir), "--model", s(&corrupt)]);
    assert!(err.contains("config_label"), "{err}");
}

fn read_prediction(path: &Path) -> Vec<[f64; 4]> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    assert_eq!(reader.headers().unwrap(), vec!["t", "low", "residual", "bifidelity"]);
    reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            [0, 1, 2, 3].map(|k| r[k].parse::<f64>().unwrap())
        })
        .collect()
}

#[test]
fn predict_writes_three_curves() {
    let dir = scratch("predict");
    let model = trained().join("model.json");
    ok(&["predict", "--out", s(&dir), "--model", s(&model)]);
    let rows = read_prediction(&dir.join("prediction.csv"));
    assert_eq!(rows.len(), 300);
    for [_, low, residual, bifi] in &rows {
        assert_eq!(*bifi, low + residual);
    }
    let echoed = RunConfig::load(&dir.join("config_predict.toml")).unwrap();
    assert_eq!(echoed.predict.u_bar, 1.06);

    ok(&["predict", "--out", s(&dir), "--model", s(&model), "--q", "2", "--t0", "0.5", "--tf", "7.5"]);
    let rows = read_prediction(&dir.join("prediction.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0][0], rows[1][0]), (0.5, 7.5));
}

#[test]
fn predict_outside_the_domain_warns_and_still_predicts() {
    let dir = scratch("extrapolate");
    let out = bifi(&["predict", "--out", s(&dir), "--model", s(&trained().join("model.json")), "--u-bar", "1.2"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    assert_eq!(read_prediction(&dir.join("prediction.csv")).len(), 300);
}

#[test]
fn evaluating_against_own_predictions_is_exact() {
    let dir = scratch("evaluate_self");
    let model_path = trained().join("model.json");
    let model = load_stored_model(&model_path).unwrap();
    let times: Vec<f64> = (0..50).map(|j| 8.0 * j as f64 / 49.0).collect();
    let trajectories = (0..15)
        .map(|i| {
            let u = 0.905 + 0.013 * i as f64;
            Trajectory {
                u_bar: u,
                times: times.clone(),
                values: model.predict(u, &times).unwrap(),
            }
        })
        .collect();
    let data = dir.join("self.csv");
    TripletDataset::new(trajectories, TargetLabel::Drag, 0.0, 8.0).unwrap().save(&data).unwrap();
    let stdout = ok(&["evaluate", "--out", s(&dir), "--model", s(&model_path), "--data", s(&data)]);
    let metrics = fs::read_to_string(dir.join("metrics.csv")).unwrap();
    assert_eq!(stdout, metrics);

    let mut reader = csv::Reader::from_reader(metrics.as_bytes());
    assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>().join(","), REPORT_HEADER);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 16);
    assert_eq!(rows.iter().filter(|r| &r[2] == "trajectory").count(), 15);
    assert_eq!(&rows[15][2], "aggregate");
    for r in &rows {
        assert_eq!(&r[0], "PP");
        assert_eq!(&r[1], "drag");
        for k in 4..8 {
            assert_eq!(&r[k], "0.00");
        }
    }
}

#[test]
fn evaluate_rejects_a_target_mismatch() {
    let dir = scratch("evaluate_target");
    let err = fails(&[
        "evaluate",
        "--out",
        s(&dir),
        "--target",
        "lift",
        "--model",
        s(&trained().join("model.json")),
        "--data",
        s(&trained().join("fine_test.csv")),
    ]);
    assert!(err.contains("lift") && err.contains("drag"), "{err}");
}

#[test]
fn evaluate_accepts_single_operator_files() {
    let dir = scratch("evaluate_low");
    ok(&[
        "evaluate",
        "--out",
        s(&dir),
        "--std",
        "sample",
        "--model",
        s(&trained().join("low_model.json")),
        "--data",
        s(&trained().join("coarse_test.csv")),
    ]);
    let metrics = fs::read_to_string(dir.join("metrics.csv")).unwrap();
    assert!(metrics.lines().nth(1).unwrap().starts_with("P,drag,trajectory,"), "{metrics}");
}
