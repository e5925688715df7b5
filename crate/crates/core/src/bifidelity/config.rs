use serde::{Deserialize, Serialize};

use crate::data::Target;
use crate::nn::{AdamConfig, PlateauConfig};
use crate::operator::{ArchitectureConfig, Normalization, OperatorVariant, TrunkKind};

/// Pre-training of the three physics-guided sub-networks on per-trajectory
/// sinusoid fits before the joint fit. Ignored for data-driven operators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WarmStartConfig {
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for WarmStartConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Target number of triplets per minibatch.
    pub batch_size: usize,
    pub scheduler: PlateauConfig,
    pub adam: AdamConfig,
    pub seed: u64,
    pub variant: OperatorVariant,
    pub trunk_kind: TrunkKind,
    pub target: Target,
    pub architecture: ArchitectureConfig,
    pub normalization: Normalization,
    /// Fraction of training trajectories held back for checkpoint selection.
    pub validation_fraction: f64,
    pub warm_start: WarmStartConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            max_epochs: 500,
            batch_size: 1024,
            scheduler: PlateauConfig::default(),
            adam: AdamConfig::default(),
            seed: 0,
            variant: OperatorVariant::PhysicsGuided,
            trunk_kind: TrunkKind::Fourier,
            target: Target::Drag,
            architecture: ArchitectureConfig::default(),
            normalization: Normalization::default(),
            validation_fraction: 0.1,
            warm_start: WarmStartConfig::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidArgument("max_epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::InvalidArgument(format!(
                "validation_fraction must lie in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        let s = &self.scheduler;
        if !(s.factor > 0.0 && s.factor < 1.0) || s.patience == 0 || !(s.min_lr > 0.0) || s.rel_threshold < 0.0 {
            return Err(Error::InvalidArgument(format!("invalid scheduler settings {s:?}")));
        }
        let a = &self.architecture;
        if a.width == 0 || a.basis_size == 0 || a.fourier_features == 0 || !(a.fourier_sigma > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid architecture {a:?}")));
        }
        self.normalization.validate()
    }
}
