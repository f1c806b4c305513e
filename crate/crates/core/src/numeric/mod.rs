//! Dense matrices, a recorded differentiation graph with second-order
//! support, MLPs, Adam, and seeded randomness.

mod adam;
mod graph;
mod matrix;
mod mlp;
mod rng;

pub use adam::{AdamConfig, AdamState};
pub use graph::{DiffGraph, NodeId};
pub use matrix::{dist, sq_dist, Matrix};
pub use mlp::{
    forward_mlp, grad_wrt_params, BoundMlp, Layer, MlpParams, OutputActivation, Parameters,
    RecordedForward, DEFAULT_LEAKY_SLOPE,
};
pub use rng::{derive_seed, gaussian_noise, SeededRng, RNG_ALGORITHM};
