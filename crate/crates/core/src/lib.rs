//! Gaussian-state simulation of analog-feedforward microwave teleportation.
//!
//! States are tracked by their first and second moments in the convention
//! `a = q + i p` with vacuum variance 1/4.

pub mod gaussian;
pub mod metrics;
pub mod network;
pub mod sweepfit;
pub mod teleport;

pub use gaussian::{
    db_to_linear, linear_to_db, BeamsplitterConvention, GaussianChannel, GaussianState, NoiseModel,
    StateError,
};
pub use network::{compile_network, parse_network, ChannelProgram, NetworkDesc, NetworkError};
pub use sweepfit::{fit_noise_model, run_sweep, FidelityRecord, FitOptions, FitResult, SweepSpec};
pub use teleport::{run_chain, teleport_coherent, TeleportParams, TeleportResult};
