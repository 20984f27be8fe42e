//! Procedural kinematic-chain benchmark data.
//!
//! A chain is a stationary base link followed by `n` (1..=6) moving links joined
//! by parallel revolute joints. This crate samples chain configurations, plays
//! back random joint trajectories, ray-casts depth and grayscale views from a
//! ring of cameras, and packs everything into annotated, checksummed instances.

pub mod chain;
pub mod dataset;
pub mod error;
pub mod motion;
pub mod render;

pub use chain::{
    count_label, forward_kinematics, normalize_lengths, padded_length_label, sample_config,
    ChainConfig, CountLabel, JointState, LengthLabel, LinkColor, LinkPoses,
};
pub use error::{Error, Result};
pub use motion::{sample_trajectory, JointTrajectory, MotionParams};

/// Deterministic random source used throughout the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate's random source from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
