//! Discrete-time spiking networks whose synaptic delays are trained by
//! surrogate-gradient backpropagation while the weights stay fixed.
//!
//! The pieces, bottom-up:
//!
//! - [`signal`]: spike trains, dense signals, causal convolution and shifts
//! - [`srm`]: spike response kernels and neuron integration
//! - [`delay`]: real-valued delays with a floored step view
//! - [`network`]: fully connected layers and the cached forward pass
//! - [`gradient`]: the surrogate backward pass for weights and delays
//! - [`loss`]: target trains, the filtered spike-train loss, decoding
//! - [`optim`]: Adam and the per-mode constraints
//! - [`data`]: IDX files, threshold encoding, splits and batches
//! - [`training`]: batch gradients, training steps and evaluation

pub mod data;
pub mod delay;
pub mod error;
pub mod gradient;
pub mod loss;
pub mod network;
pub mod optim;
pub mod signal;
pub mod srm;
pub mod training;

pub use error::{Result, SnnError};
pub use gradient::{GradientSet, SurrogateConfig};
pub use network::{ForwardTrace, LayerParams, Network, NetworkConfig};
pub use optim::{AdamState, TrainMode};
pub use signal::{Signal, SpikeRaster, SpikeTrain, TimeGrid};
