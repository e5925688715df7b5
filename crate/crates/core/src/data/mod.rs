//! Triplet datasets, CSV ingestion, trajectory-level splitting, benchmark
//! physics relations and the synthetic bi-fidelity generator.

mod dataset;
pub mod physics;
mod split;
pub mod synthetic;

pub use dataset::{
    load_triplets, save_triplets, Target, TargetLabel, Trajectory, TripletDataset,
    DEFAULT_TIME_WINDOW, DEFAULT_VELOCITY_DOMAIN,
};
pub use physics::{
    coefficient_from_force, mean_velocity, parabolic_inlet, reynolds, BenchmarkConstants,
};
pub use split::{split, test_count};
pub use synthetic::{generate_synthetic, sample_velocities, uniform_grid, SyntheticGeneratorParams};
