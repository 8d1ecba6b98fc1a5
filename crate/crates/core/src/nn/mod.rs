//! The feed-forward network: dense layers, activations, forward pass,
//! cross-entropy loss and backpropagation.

mod activation;
mod backprop;
mod network;

pub use activation::{apply_dropout, relu, relu_grad, softmax, ActivationKind, Mode};
pub(crate) use backprop::cross_entropy_index;
pub(crate) use network::forward_impl;
pub use backprop::{
    backward, batch_gradient, cross_entropy, one_hot_index, BatchGradient, Gradients, LayerGradient,
    PROB_FLOOR,
};
pub use network::{
    forward, init_weights, weighted_sum, Architecture, DenseLayer, ForwardTrace, InitScheme,
    LayerSpec, Network, SURVEY_INPUTS, SURVEY_OUTPUTS,
};
