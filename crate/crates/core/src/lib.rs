//! Bi-fidelity operator learning for oscillatory drag and lift trajectories.

pub mod error;
pub mod nn;
pub mod data;
pub mod metrics;
pub mod operator;
pub mod bifidelity;

#[cfg(any(test, feature = "test-support"))]
pub mod testing;

pub use bifidelity::{BiFidelityModel, TrainingConfig};
pub use data::{Target, TargetLabel, Trajectory, TripletDataset};
pub use error::{Error, Result};
pub use metrics::{ErrorReport, StdKind, TrajectoryError};
pub use operator::{Normalization, Operator, OperatorVariant, TrunkKind};
