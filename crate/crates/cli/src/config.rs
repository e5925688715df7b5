//! Run configuration: a TOML file with command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use bifi_core::bifidelity::{TrainingConfig, WarmStartConfig};
use bifi_core::data::{SyntheticGeneratorParams, Target, DEFAULT_TIME_WINDOW, DEFAULT_VELOCITY_DOMAIN};
use bifi_core::metrics::StdKind;
use bifi_core::nn::{derive_seed, AdamConfig, PlateauConfig};
use bifi_core::operator::{ArchitectureConfig, Normalization, OperatorVariant, TrunkKind};

/// Streams derived from the run seed.
pub mod streams {
    pub const COARSE_VELOCITIES: u64 = 41;
    pub const FINE_VELOCITIES: u64 = 42;
    pub const COARSE_NOISE: u64 = 43;
    pub const FINE_NOISE: u64 = 44;
    pub const COARSE_SPLIT: u64 = 51;
    pub const FINE_SPLIT: u64 = 52;
    pub const LOW_TRAINING: u64 = 61;
    pub const RESIDUAL_TRAINING: u64 = 62;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub n_coarse: usize,
    pub n_fine: usize,
    /// Samples per trajectory.
    pub q: usize,
    pub t0: f64,
    pub tf: f64,
    pub velocity_domain: (f64, f64),
    /// Fraction of trajectories held out for testing.
    pub test_fraction: f64,
    /// Defaults to `<out>/coarse.csv`.
    pub coarse: Option<PathBuf>,
    /// Defaults to `<out>/fine.csv`.
    pub fine: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            n_coarse: 150,
            n_fine: 50,
            q: 300,
            t0: DEFAULT_TIME_WINDOW.0,
            tf: DEFAULT_TIME_WINDOW.1,
            velocity_domain: DEFAULT_VELOCITY_DOMAIN,
            test_fraction: 0.1,
            coarse: None,
            fine: None,
        }
    }
}

/// Training settings for one operator; seed and target come from the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub variant: OperatorVariant,
    pub trunk_kind: TrunkKind,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub validation_fraction: f64,
    pub scheduler: PlateauConfig,
    pub adam: AdamConfig,
    pub architecture: ArchitectureConfig,
    pub normalization: Normalization,
    pub warm_start: WarmStartConfig,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let c = TrainingConfig::default();
        Self {
            variant: c.variant,
            trunk_kind: c.trunk_kind,
            learning_rate: c.learning_rate,
            max_epochs: c.max_epochs,
            batch_size: c.batch_size,
            validation_fraction: c.validation_fraction,
            scheduler: c.scheduler,
            adam: c.adam,
            architecture: c.architecture,
            normalization: c.normalization,
            warm_start: c.warm_start,
        }
    }
}

impl TrainingSection {
    pub fn training_config(&self, seed: u64, target: Target) -> TrainingConfig {
        TrainingConfig {
            learning_rate: self.learning_rate,
            max_epochs: self.max_epochs,
            batch_size: self.batch_size,
            scheduler: self.scheduler,
            adam: self.adam,
            seed,
            variant: self.variant,
            trunk_kind: self.trunk_kind,
            target,
            architecture: self.architecture,
            normalization: self.normalization,
            validation_fraction: self.validation_fraction,
            warm_start: self.warm_start,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub u_bar: f64,
    pub q: usize,
    pub t0: f64,
    pub tf: f64,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            u_bar: 1.06,
            q: 300,
            t0: DEFAULT_TIME_WINDOW.0,
            tf: DEFAULT_TIME_WINDOW.1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Defaults to `<out>/fine_test.csv`.
    pub data: Option<PathBuf>,
    pub std: StdKind,
}

/// Every knob of a run. A run is reproducible from this record and its
/// input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub target: Target,
    /// Defaults to `<out>/low_model.json`.
    pub low_model: Option<PathBuf>,
    /// Defaults to `<out>/model.json`.
    pub model: Option<PathBuf>,
    pub data: DataConfig,
    /// Synthetic generator constants; the built-in set for `target` when absent.
    pub generator: Option<SyntheticGeneratorParams>,
    pub low: TrainingSection,
    pub residual: TrainingSection,
    pub predict: PredictConfig,
    pub evaluate: EvaluateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            target: Target::Drag,
            low_model: None,
            model: None,
            data: DataConfig::default(),
            generator: None,
            low: TrainingSection::default(),
            residual: TrainingSection::default(),
            predict: PredictConfig::default(),
            evaluate: EvaluateConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }

    pub fn coarse_path(&self) -> PathBuf {
        self.data.coarse.clone().unwrap_or_else(|| self.out.join("coarse.csv"))
    }

    pub fn fine_path(&self) -> PathBuf {
        self.data.fine.clone().unwrap_or_else(|| self.out.join("fine.csv"))
    }

    pub fn low_model_path(&self) -> PathBuf {
        self.low_model.clone().unwrap_or_else(|| self.out.join("low_model.json"))
    }

    pub fn model_path(&self) -> PathBuf {
        self.model.clone().unwrap_or_else(|| self.out.join("model.json"))
    }

    pub fn evaluation_data_path(&self) -> PathBuf {
        self.evaluate.data.clone().unwrap_or_else(|| self.out.join("fine_test.csv"))
    }

    pub fn generator_params(&self) -> SyntheticGeneratorParams {
        self.generator.unwrap_or_else(|| SyntheticGeneratorParams::for_target(self.target))
    }

    pub fn low_training(&self) -> TrainingConfig {
        self.low.training_config(derive_seed(self.seed, streams::LOW_TRAINING), self.target)
    }

    pub fn residual_training(&self) -> TrainingConfig {
        self.residual
            .training_config(derive_seed(self.seed, streams::RESIDUAL_TRAINING), self.target)
    }

    /// Fills in defaults that depend on other fields, so the echoed config
    /// shows exactly what ran.
    pub fn resolve(mut self) -> Self {
        self.generator = Some(self.generator_params());
        self.data.coarse = Some(self.coarse_path());
        self.data.fine = Some(self.fine_path());
        self.low_model = Some(self.low_model_path());
        self.model = Some(self.model_path());
        self.evaluate.data = Some(self.evaluation_data_path());
        self
    }

    /// Checks what can be checked without touching the file system; errors
    /// name the config key or flag involved.
    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if d.q < 2 {
            bail!("--q / data.q must be at least 2, got {}", d.q);
        }
        if !(d.t0.is_finite() && d.tf.is_finite() && d.t0 < d.tf) {
            bail!("--t0 / --tf: time window [{}, {}] is empty", d.t0, d.tf);
        }
        if !(d.velocity_domain.0 < d.velocity_domain.1) {
            bail!("data.velocity_domain {:?} is empty", d.velocity_domain);
        }
        if d.n_coarse < 2 {
            bail!("--n-coarse / data.n_coarse must be at least 2, got {}", d.n_coarse);
        }
        if d.n_fine < 2 {
            bail!("--n-fine / data.n_fine must be at least 2, got {}", d.n_fine);
        }
        if !(d.test_fraction > 0.0 && d.test_fraction < 1.0) {
            bail!("data.test_fraction must lie in (0, 1), got {}", d.test_fraction);
        }
        let p = &self.predict;
        if p.q < 2 {
            bail!("--q / predict.q must be at least 2, got {}", p.q);
        }
        if !(p.t0.is_finite() && p.tf.is_finite() && p.t0 < p.tf) {
            bail!("--t0 / --tf: prediction window [{}, {}] is empty", p.t0, p.tf);
        }
        if !p.u_bar.is_finite() {
            bail!("--u-bar must be finite, got {}", p.u_bar);
        }
        self.low_training().validate().context("invalid [low] section")?;
        self.residual_training().validate().context("invalid [residual] section")?;
        self.generator_params().validate().context("invalid [generator] section")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = RunConfig::default().resolve();
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_file_keeps_other_defaults() {
        let c: RunConfig = toml::from_str("seed = 7\ntarget = \"lift\"\n[low]\nmax_epochs = 3\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.target, Target::Lift);
        assert_eq!(c.low.max_epochs, 3);
        assert_eq!(c.residual.max_epochs, 500);
        assert_eq!(c.data.q, 300);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<RunConfig>("[low]\nepochs = 3\n").unwrap_err();
        assert!(err.to_string().contains("epochs"), "{err}");
    }

    #[test]
    fn validation_names_the_flag() {
        let mut c = RunConfig::default();
        c.data.q = 1;
        assert!(c.validate().unwrap_err().to_string().contains("--q"));
        let mut c = RunConfig::default();
        c.predict.t0 = 9.0;
        assert!(c.validate().unwrap_err().to_string().contains("--t0"));
    }
}
