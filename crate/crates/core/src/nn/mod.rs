//! Dense feed-forward networks with hand-written backpropagation, the MSE
//! loss, the Adam optimizer and a reduce-on-plateau learning-rate schedule.

mod adam;
mod loss;
mod network;
mod scheduler;

pub use adam::{AdamConfig, AdamState};
pub use loss::mse_loss;
pub use network::{
    Activation, Dense, DenseNetwork, DenseNetworkSpec, ForwardCache, NetGradients,
    OutputActivation,
};
pub use scheduler::{PlateauConfig, PlateauScheduler};

/// SplitMix64 finalizer, used to derive independent sub-seeds from one run seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
