//! One function per subcommand. Each takes a resolved [`RunConfig`], writes
//! its outputs under `config.out` and echoes the config it ran with.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};

use bifi_core::bifidelity;
use bifi_core::bifidelity::{
    build_residual_dataset, load_operator, load_stored_model, predict_bifidelity, save_model,
    save_operator, train_low_fidelity, BiFidelityModel, StoredModel,
    StoredOperator, TrainingReport,
};
use bifi_core::data::{generate_synthetic, sample_velocities, split, uniform_grid, TargetLabel, TripletDataset};
use bifi_core::metrics::{aggregate, ErrorReport, TrajectoryError};
use bifi_core::nn::derive_seed;

use crate::config::{streams, RunConfig};

fn prepare_out(config: &RunConfig, command: &str) -> Result<()> {
    fs::create_dir_all(&config.out)
        .with_context(|| format!("creating output directory {}", config.out.display()))?;
    let path = config.out.join(format!("config_{command}.toml"));
    fs::write(&path, config.to_toml()).with_context(|| format!("writing {}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn load_dataset(path: &Path, label: TargetLabel) -> Result<TripletDataset> {
    TripletDataset::load(path, label).with_context(|| format!("loading dataset {}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerateSummary {
    pub coarse_trajectories: usize,
    pub fine_trajectories: usize,
    pub q: usize,
}

/// Coarse and fine synthetic datasets. The two fidelities use independent
/// velocity draws.
pub fn generate(config: &RunConfig) -> Result<GenerateSummary> {
    prepare_out(config, "generate")?;
    let d = &config.data;
    let params = config.generator_params();
    let run = |n: usize, velocity_stream: u64, noise_stream: u64| {
        let velocities = sample_velocities(n, d.velocity_domain, derive_seed(config.seed, velocity_stream));
        generate_synthetic(
            &params,
            &velocities,
            d.q,
            d.t0,
            d.tf,
            derive_seed(config.seed, noise_stream),
            config.target,
        )
    };
    let (coarse, _) = run(d.n_coarse, streams::COARSE_VELOCITIES, streams::COARSE_NOISE)?;
    let (_, fine) = run(d.n_fine, streams::FINE_VELOCITIES, streams::FINE_NOISE)?;
    for (ds, path) in [(&coarse, config.coarse_path()), (&fine, config.fine_path())] {
        if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        ds.save(&path).with_context(|| format!("writing {}", path.display()))?;
    }
    println!(
        "generated {} coarse and {} fine {} trajectories with {} points each",
        coarse.num_trajectories(),
        fine.num_trajectories(),
        config.target,
        d.q
    );
    Ok(GenerateSummary {
        coarse_trajectories: coarse.num_trajectories(),
        fine_trajectories: fine.num_trajectories(),
        q: d.q,
    })
}

fn print_report(name: &str, report: &TrainingReport) {
    println!(
        "{name}: {} epochs, best epoch {}, validation mse {:.4e}{}",
        report.epochs_run(),
        report.best_epoch,
        report.best_val_loss,
        if report.stopped_at_lr_floor { " (stopped at learning-rate floor)" } else { "" }
    );
}

/// Splits the coarse data, trains the low-fidelity operator and writes
/// `low_model.json`, `low_training_log.csv` and `coarse_test.csv`.
pub fn train_low(config: &RunConfig) -> Result<TrainingReport> {
    prepare_out(config, "train-low")?;
    let data = load_dataset(&config.coarse_path(), config.target.into())?;
    let (train, test) = split(&data, config.data.test_fraction, derive_seed(config.seed, streams::COARSE_SPLIT))?;
    test.save(&config.out.join("coarse_test.csv"))?;
    let trained = train_low_fidelity(&train, &config.low_training()).context("training the low-fidelity operator")?;
    let stored = StoredOperator {
        operator: trained.operator,
        target: config.target,
        provenance: trained.provenance,
    };
    save_operator(&stored, &config.low_model_path())?;
    write_file(&config.out.join("low_training_log.csv"), &trained.report.to_csv_string())?;
    print_report("low-fidelity", &trained.report);
    Ok(trained.report)
}

/// Builds the residual dataset from the fine training split, trains the
/// residual operator and writes the combined model to `model.json`.
pub fn train_residual(config: &RunConfig) -> Result<TrainingReport> {
    prepare_out(config, "train-residual")?;
    let low_path = config.low_model_path();
    let low = load_operator(&low_path).with_context(|| format!("loading low-fidelity model {}", low_path.display()))?;
    if low.target != config.target {
        bail!(
            "--target {} does not match the {} target of low-fidelity model {}",
            config.target,
            low.target,
            low_path.display()
        );
    }
    let residual_config = config.residual_training();
    if *low.operator.normalization() != residual_config.normalization {
        bail!(
            "residual.normalization {:?} differs from the normalization {:?} of low-fidelity model {}",
            residual_config.normalization,
            low.operator.normalization(),
            low_path.display()
        );
    }
    let fine = load_dataset(&config.fine_path(), config.target.into())?;
    let (train, test) = split(&fine, config.data.test_fraction, derive_seed(config.seed, streams::FINE_SPLIT))?;
    test.save(&config.out.join("fine_test.csv"))?;
    let residual_data = build_residual_dataset(&low.operator, &train)?;
    let trained = bifidelity::train_residual(&residual_data, &residual_config).context("training the residual operator")?;
    let report = trained.report.clone();
    let model = BiFidelityModel::from_parts(
        low.operator,
        trained.operator,
        config.target,
        low.provenance,
        trained.provenance,
    )?;
    save_model(&model, &config.model_path())?;
    write_file(&config.out.join("residual_training_log.csv"), &report.to_csv_string())?;
    print_report("residual", &report);
    println!("wrote {} model {}", model.config_label, config.model_path().display());
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTable {
    pub times: Vec<f64>,
    pub low: Vec<f64>,
    pub residual: Vec<f64>,
    pub bifidelity: Vec<f64>,
}

impl PredictionTable {
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("t,low,residual,bifidelity\n");
        for i in 0..self.times.len() {
            s.push_str(&format!("{},{},{},{}\n", self.times[i], self.low[i], self.residual[i], self.bifidelity[i]));
        }
        s
    }
}

/// Writes `prediction.csv` for `predict.u_bar` on a uniform partition. A
/// single-operator file is reported with a zero residual column.
pub fn predict(config: &RunConfig) -> Result<PredictionTable> {
    prepare_out(config, "predict")?;
    let p = &config.predict;
    let path = config.model_path();
    let model = load_stored_model(&path).with_context(|| format!("loading model {}", path.display()))?;
    let times = uniform_grid(p.q, p.t0, p.tf)?;
    let table = match &model {
        StoredModel::BiFidelity(m) => {
            let pred = predict_bifidelity(m, p.u_bar, &times)?;
            for w in &pred.warnings {
                eprintln!("warning: {w}");
            }
            PredictionTable {
                times: pred.times,
                low: pred.low,
                residual: pred.residual,
                bifidelity: pred.combined,
            }
        }
        StoredModel::Operator(o) => {
            for w in o.operator.normalization().extrapolation_warnings(p.u_bar, &times) {
                eprintln!("warning: {w}");
            }
            let low = o.operator.predict_trajectory(p.u_bar, &times)?;
            PredictionTable {
                residual: vec![0.0; times.len()],
                bifidelity: low.clone(),
                low,
                times,
            }
        }
    };
    let out = config.out.join("prediction.csv");
    write_file(&out, &table.to_csv_string())?;
    println!("wrote {} rows for u_bar = {} to {}", table.times.len(), p.u_bar, out.display());
    Ok(table)
}

/// Per-trajectory and aggregate relative errors, written to `metrics.csv`
/// and stdout. The dataset is taken to hold the configured target.
pub fn evaluate(config: &RunConfig) -> Result<ErrorReport> {
    prepare_out(config, "evaluate")?;
    let path = config.model_path();
    let model = load_stored_model(&path).with_context(|| format!("loading model {}", path.display()))?;
    if model.target() != config.target {
        bail!(
            "--target {} does not match the {} target of model {}",
            config.target,
            model.target(),
            path.display()
        );
    }
    let data = load_dataset(&config.evaluation_data_path(), config.target.into())?;
    let errors = data
        .trajectories()
        .iter()
        .map(|tr| {
            let pred = model.predict(tr.u_bar, &tr.times)?;
            Ok(TrajectoryError::compute(tr.u_bar, &pred, &tr.values)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let report = aggregate(errors, config.evaluate.std)?;
    let csv = report.to_csv_string(&model.label(), &config.target.to_string());
    write_file(&config.out.join("metrics.csv"), &csv)?;
    std::io::stdout().write_all(csv.as_bytes())?;
    Ok(report)
}
