use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{split, Target, TargetLabel, TripletDataset};
use crate::error::{Error, Result};
use crate::nn::derive_seed;
use crate::operator::{Operator, OperatorVariant};

use super::config::TrainingConfig;
use super::trainer::{fit, LoopOptions, TrainingReport};
use super::warm_start::warm_start;

/// Which operator variants make up the low-fidelity and residual parts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConfigLabel {
    PP,
    DP,
    DD,
    PD,
}

impl ConfigLabel {
    pub fn from_variants(low: OperatorVariant, residual: OperatorVariant) -> Self {
        use OperatorVariant::*;
        match (low, residual) {
            (PhysicsGuided, PhysicsGuided) => ConfigLabel::PP,
            (DataDriven, PhysicsGuided) => ConfigLabel::DP,
            (DataDriven, DataDriven) => ConfigLabel::DD,
            (PhysicsGuided, DataDriven) => ConfigLabel::PD,
        }
    }

    pub fn variants(self) -> (OperatorVariant, OperatorVariant) {
        use OperatorVariant::*;
        match self {
            ConfigLabel::PP => (PhysicsGuided, PhysicsGuided),
            ConfigLabel::DP => (DataDriven, PhysicsGuided),
            ConfigLabel::DD => (DataDriven, DataDriven),
            ConfigLabel::PD => (PhysicsGuided, DataDriven),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ConfigLabel::PP => "PP",
            ConfigLabel::DP => "DP",
            ConfigLabel::DD => "DD",
            ConfigLabel::PD => "PD",
        }
    }
}

impl fmt::Display for ConfigLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConfigLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "PP" => Ok(ConfigLabel::PP),
            "DP" => Ok(ConfigLabel::DP),
            "DD" => Ok(ConfigLabel::DD),
            "PD" => Ok(ConfigLabel::PD),
            other => Err(Error::InvalidArgument(format!(
                "unknown configuration label {other:?} (expected PP, DP, DD or PD)"
            ))),
        }
    }
}

/// Where a trained operator came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingProvenance {
    pub seed: u64,
    pub dataset_fingerprint: String,
    pub epochs_run: usize,
    pub best_epoch: usize,
}

#[derive(Debug, Clone)]
pub struct TrainedOperator {
    pub operator: Operator,
    pub report: TrainingReport,
    pub provenance: TrainingProvenance,
}

#[derive(Debug, Clone)]
pub struct BiFidelityModel {
    pub low: Operator,
    pub residual: Operator,
    pub config_label: ConfigLabel,
    pub target: Target,
    pub low_provenance: TrainingProvenance,
    pub residual_provenance: TrainingProvenance,
}

impl BiFidelityModel {
    pub fn new(
        low: TrainedOperator,
        residual: TrainedOperator,
        target: Target,
    ) -> Result<Self> {
        Self::from_parts(low.operator, residual.operator, target, low.provenance, residual.provenance)
    }

    pub fn from_parts(
        low: Operator,
        residual: Operator,
        target: Target,
        low_provenance: TrainingProvenance,
        residual_provenance: TrainingProvenance,
    ) -> Result<Self> {
        if low.normalization() != residual.normalization() {
            return Err(Error::InvalidArgument(format!(
                "low-fidelity normalization {:?} differs from residual normalization {:?}",
                low.normalization(),
                residual.normalization()
            )));
        }
        Ok(Self {
            config_label: ConfigLabel::from_variants(low.variant(), residual.variant()),
            low,
            residual,
            target,
            low_provenance,
            residual_provenance,
        })
    }
}

/// Output of [`predict_bifidelity`].
#[derive(Debug, Clone, PartialEq)]
pub struct BiFidelityPrediction {
    pub times: Vec<f64>,
    pub low: Vec<f64>,
    pub residual: Vec<f64>,
    pub combined: Vec<f64>,
    pub warnings: Vec<String>,
}

fn loop_options(config: &TrainingConfig) -> LoopOptions {
    LoopOptions {
        learning_rate: config.learning_rate,
        max_epochs: config.max_epochs,
        batch_size: config.batch_size,
        scheduler: config.scheduler,
        adam: config.adam,
        seed: derive_seed(config.seed, 20),
    }
}

fn train_operator(dataset: &TripletDataset, config: &TrainingConfig) -> Result<TrainedOperator> {
    config.validate()?;
    if dataset.num_triplets() == 0 {
        return Err(Error::Empty("training dataset"));
    }
    let (train, validation) = if config.validation_fraction > 0.0 && dataset.num_trajectories() >= 2 {
        split(dataset, config.validation_fraction, derive_seed(config.seed, 21))?
    } else {
        (dataset.clone(), dataset.clone())
    };
    let opts = loop_options(config);
    let mut op = Operator::new(
        config.variant,
        &config.architecture,
        config.trunk_kind,
        config.normalization,
        derive_seed(config.seed, 1),
    )?;
    if let Operator::PhysicsGuided(model) = op {
        op = Operator::PhysicsGuided(warm_start(model, &train, &validation, &config.warm_start, &opts)?);
    }
    let (operator, report) = fit(op, &train, &validation, &opts)?;
    log::info!(
        "trained {:?} operator: best epoch {} of {}, validation mse {:.3e}",
        config.variant,
        report.best_epoch,
        report.epochs_run(),
        report.best_val_loss
    );
    Ok(TrainedOperator {
        provenance: TrainingProvenance {
            seed: config.seed,
            dataset_fingerprint: dataset.fingerprint(),
            epochs_run: report.epochs_run(),
            best_epoch: report.best_epoch,
        },
        operator,
        report,
    })
}

/// Trains an operator on low-fidelity trajectories.
pub fn train_low_fidelity(dataset: &TripletDataset, config: &TrainingConfig) -> Result<TrainedOperator> {
    train_operator(dataset, config)
}

/// Trains an operator on a residual dataset from [`build_residual_dataset`].
pub fn train_residual(residual: &TripletDataset, config: &TrainingConfig) -> Result<TrainedOperator> {
    train_operator(residual, config)
}

/// Replaces every high-fidelity value by its difference from the low-fidelity
/// prediction at the same velocity and time.
pub fn build_residual_dataset(low: &Operator, hi: &TripletDataset) -> Result<TripletDataset> {
    let predictions: Vec<Vec<f64>> = hi
        .trajectories()
        .iter()
        .map(|tr| low.predict_trajectory(tr.u_bar, &tr.times))
        .collect::<Result<_>>()?;
    hi.map_values(TargetLabel::Residual, |i, j, tr| tr.values[j] - predictions[i][j])
}

/// Evaluates low-fidelity and residual operators over `partition` and adds
/// them pointwise.
pub fn predict_bifidelity(model: &BiFidelityModel, u_bar: f64, partition: &[f64]) -> Result<BiFidelityPrediction> {
    if partition.is_empty() {
        return Err(Error::Empty("time partition"));
    }
    if let Some(w) = partition.windows(2).position(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument(format!(
            "time partition must be strictly increasing; entries {w} and {} are {} and {}",
            w + 1,
            partition[w],
            partition[w + 1]
        )));
    }
    if !u_bar.is_finite() || partition.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("prediction inputs".into()));
    }
    let low = model.low.predict_trajectory(u_bar, partition)?;
    let residual = model.residual.predict_trajectory(u_bar, partition)?;
    let combined = low.iter().zip(&residual).map(|(a, b)| a + b).collect();
    Ok(BiFidelityPrediction {
        times: partition.to_vec(),
        warnings: model.low.normalization().extrapolation_warnings(u_bar, partition),
        low,
        residual,
        combined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Trajectory;
    use crate::operator::{ArchitectureConfig, Normalization, TrunkKind};

    fn small_arch() -> ArchitectureConfig {
        ArchitectureConfig {
            hidden_layers: 2,
            width: 16,
            basis_size: 8,
            fourier_features: 8,
            fourier_sigma: 2.0,
        }
    }

    fn constant_dataset(value: f64, label: TargetLabel) -> TripletDataset {
        let times: Vec<f64> = (0..20).map(|j| 8.0 * j as f64 / 19.0).collect();
        let trajectories = (0..10)
            .map(|i| Trajectory {
                u_bar: 0.9 + 0.02 * i as f64,
                times: times.clone(),
                values: vec![value; times.len()],
            })
            .collect();
        TripletDataset::new(trajectories, label, 0.0, 8.0).unwrap()
    }

    fn quick_config(variant: OperatorVariant) -> TrainingConfig {
        TrainingConfig {
            learning_rate: 1e-3,
            max_epochs: 300,
            batch_size: 64,
            variant,
            architecture: small_arch(),
            ..Default::default()
        }
    }

    fn zero_last_layer(op: &mut Operator) {
        for net in op.networks_mut() {
            let last = net.layers_mut().last_mut().unwrap();
            last.weight.fill(0.0);
            last.bias.fill(0.0);
        }
    }

    /// Sets an operator to the constant `c` by zeroing the trunk output and
    /// using a single branch bias and trunk bias.
    fn constant_operator(c: f64) -> Operator {
        let mut op = Operator::new(
            OperatorVariant::DataDriven,
            &small_arch(),
            TrunkKind::Fourier,
            Normalization::default(),
            9,
        )
        .unwrap();
        zero_last_layer(&mut op);
        let nets = op.networks_mut();
        let mut it = nets.into_iter();
        it.next().unwrap().layers_mut().last_mut().unwrap().bias[0] = c;
        it.next().unwrap().layers_mut().last_mut().unwrap().bias[0] = 1.0;
        op
    }

    fn provenance() -> TrainingProvenance {
        TrainingProvenance {
            seed: 0,
            dataset_fingerprint: String::new(),
            epochs_run: 0,
            best_epoch: 0,
        }
    }

    #[test]
    fn labels_follow_variants() {
        use OperatorVariant::*;
        for (l, r, label) in [
            (PhysicsGuided, PhysicsGuided, "PP"),
            (DataDriven, PhysicsGuided, "DP"),
            (DataDriven, DataDriven, "DD"),
            (PhysicsGuided, DataDriven, "PD"),
        ] {
            let c = ConfigLabel::from_variants(l, r);
            assert_eq!(c.as_str(), label);
            assert_eq!(c.variants(), (l, r));
            assert_eq!(label.parse::<ConfigLabel>().unwrap(), c);
        }
        assert!("XX".parse::<ConfigLabel>().is_err());
    }

    #[test]
    fn learns_constant_target() {
        let ds = constant_dataset(3.0, TargetLabel::Drag);
        let trained = train_low_fidelity(&ds, &TrainingConfig::default()).unwrap();
        for tr in ds.trajectories() {
            for p in trained.operator.predict_trajectory(tr.u_bar, &tr.times).unwrap() {
                assert!((p - 3.0).abs() < 0.01, "{p}");
            }
        }
    }

    #[test]
    fn learns_zero_residual() {
        let ds = constant_dataset(0.0, TargetLabel::Residual);
        let trained = train_residual(&ds, &TrainingConfig::default()).unwrap();
        let times: Vec<f64> = (0..=160).map(|j| 0.05 * j as f64).collect();
        for k in 0..=20 {
            let u = 0.9 + 0.01 * k as f64;
            for p in trained.operator.predict_trajectory(u, &times).unwrap() {
                assert!(p.abs() < 0.01, "u = {u}: {p}");
            }
        }
    }

    #[test]
    fn training_is_deterministic() {
        let times: Vec<f64> = (0..20).map(|j| 8.0 * j as f64 / 19.0).collect();
        let trajectories = (0..6)
            .map(|i| Trajectory {
                u_bar: 0.9 + 0.04 * i as f64,
                times: times.clone(),
                values: times.iter().map(|&t| (t * (1.0 + i as f64 * 0.1)).sin()).collect(),
            })
            .collect();
        let ds = TripletDataset::new(trajectories, TargetLabel::Lift, 0.0, 8.0).unwrap();
        for variant in [OperatorVariant::DataDriven, OperatorVariant::PhysicsGuided] {
            let config = TrainingConfig {
                max_epochs: 5,
                warm_start: super::super::WarmStartConfig {
                    epochs: 3,
                    ..Default::default()
                },
                ..quick_config(variant)
            };
            let a = train_low_fidelity(&ds, &config).unwrap();
            let b = train_low_fidelity(&ds, &config).unwrap();
            for (na, nb) in a.operator.networks().iter().zip(b.operator.networks()) {
                for (la, lb) in na.layers().iter().zip(nb.layers()) {
                    assert!(la.weight.iter().zip(lb.weight.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
                    assert!(la.bias.iter().zip(lb.bias.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
                }
            }
            assert_eq!(a.report, b.report);
        }
    }

    #[test]
    fn best_checkpoint_is_no_worse_than_last_epoch() {
        let ds = constant_dataset(1.5, TargetLabel::Drag);
        let trained = train_low_fidelity(
            &ds,
            &TrainingConfig {
                max_epochs: 30,
                learning_rate: 3e-2,
                ..quick_config(OperatorVariant::DataDriven)
            },
        )
        .unwrap();
        let last = trained.report.history.last().unwrap().val_loss;
        assert!(trained.report.best_val_loss <= last);
    }

    #[test]
    fn residual_dataset_subtracts_low_prediction() {
        let hi = constant_dataset(3.3, TargetLabel::Drag);
        let low = constant_operator(3.1);
        let eps = build_residual_dataset(&low, &hi).unwrap();
        assert_eq!(eps.num_trajectories(), hi.num_trajectories());
        for (a, b) in eps.trajectories().iter().zip(hi.trajectories()) {
            assert_eq!(a.u_bar, b.u_bar);
            assert_eq!(a.times, b.times);
            for v in &a.values {
                assert!((v - 0.2).abs() < 1e-12);
            }
        }

        let zero = constant_operator(0.0);
        let same = build_residual_dataset(&zero, &hi).unwrap();
        for (a, b) in same.trajectories().iter().zip(hi.trajectories()) {
            assert_eq!(a.values, b.values);
        }

        let perfect = constant_operator(3.3);
        let none = build_residual_dataset(&perfect, &hi).unwrap();
        assert!(none.trajectories().iter().all(|tr| tr.values.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn constants_add() {
        let model = BiFidelityModel::from_parts(
            constant_operator(2.0),
            constant_operator(0.5),
            Target::Drag,
            provenance(),
            provenance(),
        )
        .unwrap();
        assert_eq!(model.config_label, ConfigLabel::DD);
        let p = predict_bifidelity(&model, 1.0, &[0.0, 0.5, 7.9]).unwrap();
        assert!(p.combined.iter().all(|&v| v == 2.5));
        assert!(p.warnings.is_empty());
    }

    #[test]
    fn zeroed_residual_reproduces_low_fidelity() {
        let arch = small_arch();
        let low = Operator::new(OperatorVariant::PhysicsGuided, &arch, TrunkKind::Fourier, Normalization::default(), 4).unwrap();
        let mut residual =
            Operator::new(OperatorVariant::PhysicsGuided, &arch, TrunkKind::Fourier, Normalization::default(), 5).unwrap();
        zero_last_layer(&mut residual);
        let model = BiFidelityModel::from_parts(low.clone(), residual, Target::Lift, provenance(), provenance()).unwrap();
        let times: Vec<f64> = (0..50).map(|j| 0.16 * j as f64).collect();
        let p = predict_bifidelity(&model, 1.02, &times).unwrap();
        assert_eq!(p.combined, low.predict_trajectory(1.02, &times).unwrap());
    }

    #[test]
    fn rejects_bad_partitions_and_warns_outside_domain() {
        let model =
            BiFidelityModel::from_parts(constant_operator(1.0), constant_operator(0.0), Target::Drag, provenance(), provenance())
                .unwrap();
        assert!(matches!(predict_bifidelity(&model, 1.0, &[]), Err(Error::Empty(_))));
        assert!(predict_bifidelity(&model, 1.0, &[0.0, 1.0, 1.0]).is_err());
        assert!(predict_bifidelity(&model, 1.0, &[2.0, 1.0]).is_err());
        let p = predict_bifidelity(&model, 1.2, &[0.0, 1.0]).unwrap();
        assert!(!p.warnings.is_empty());
        assert_eq!(p.combined, vec![1.0, 1.0]);
    }

    #[test]
    fn mismatched_normalization_is_rejected() {
        let other = Operator::new(
            OperatorVariant::DataDriven,
            &small_arch(),
            TrunkKind::Fourier,
            Normalization {
                u_scale: 0.2,
                ..Normalization::default()
            },
            1,
        )
        .unwrap();
        assert!(BiFidelityModel::from_parts(constant_operator(1.0), other, Target::Drag, provenance(), provenance()).is_err());
    }
}
