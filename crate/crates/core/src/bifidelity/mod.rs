//! Low-fidelity and residual training and the additive bi-fidelity predictor.

mod config;
pub mod io;
mod model;
mod refit;
mod trainer;
pub mod warm_start;

pub use config::{TrainingConfig, WarmStartConfig};
pub use io::{
    load_model, load_operator, load_stored_model, save_model, save_operator, StoredModel, StoredOperator,
    MODEL_SCHEMA_VERSION,
};
pub use model::{
    build_residual_dataset, predict_bifidelity, train_low_fidelity, train_residual, BiFidelityModel,
    BiFidelityPrediction, ConfigLabel, TrainedOperator, TrainingProvenance,
};
pub use trainer::{dataset_mse, fit, EpochLog, LoopOptions, TrainingReport};
