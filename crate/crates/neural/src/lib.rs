//! Minimal neural toolkit used by the head-movement predictor and the DDPG
//! agents.
//!
//! Networks are a flat `f64` parameter vector plus a layer specification
//! (`Gru`, `Fc`, activation). Every network consumes a *sequence* of input
//! vectors and emits one output vector per step, so feed-forward and
//! recurrent networks share one forward/backward implementation.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod network;
pub mod noise;

mod error;

pub use adam::AdamState;
pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use error::NeuralError;
pub use network::{Activation, ForwardPass, Gradients, LayerSpec, NetworkParams, ParamBlock};
pub use noise::OuNoise;

pub type Result<T> = std::result::Result<T, NeuralError>;
