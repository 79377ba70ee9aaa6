//! Dense feed-forward networks with manual backpropagation and Adam.
//!
//! This is the substrate shared by the GAN, conditional GAN and the packet
//! classifier. All arithmetic is `f64`. Batches are row-major `B × features`
//! matrices; layer weights are stored `outputs × inputs`.

mod adam;
pub mod checkpoint;
mod layer;
mod loss;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{network_to_bytes, read_network, write_network};
pub use layer::{
    sigmoid, Activation, DenseLayer, ForwardCache, ForwardPass, Gradients, LayerGrad, LayerSpec, Mode, Network, OutputGrad,
};
pub use loss::{loss_value_and_grad, softmax_cross_entropy_fused_grad, softplus, LossKind, PROB_FLOOR};

/// Default weight initialisation standard deviation.
pub const INIT_STD: f64 = 0.02;
/// Default negative slope for leaky ReLU.
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, thiserror::Error)]
pub enum NeuralError {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    ShapeMismatch {
        context: String,
        expected: usize,
        found: usize,
    },
    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),
    #[error("backward called without a training-mode forward cache")]
    MissingCache,
    #[error("invalid loss targets: {0}")]
    InvalidTargets(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Layer stack for a multilayer perceptron: `hidden` layers share
/// `hidden_activation` and `dropout`, the last layer maps to `outputs`.
pub fn mlp_specs(
    inputs: usize,
    hidden: &[usize],
    outputs: usize,
    hidden_activation: Activation,
    dropout: f64,
    output_activation: Activation,
) -> Vec<LayerSpec> {
    let mut specs = Vec::with_capacity(hidden.len() + 1);
    let mut width = inputs;
    for &h in hidden {
        specs.push(LayerSpec::new(width, h, hidden_activation).with_dropout(dropout));
        width = h;
    }
    specs.push(LayerSpec::new(width, outputs, output_activation));
    specs
}
