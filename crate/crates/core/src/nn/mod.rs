//! A small feed-forward network engine: dense layers, ReLU, power
//! normalization, softmax, fused cross-entropy, backprop and Adam/SGD.

pub(crate) mod gradcheck;
mod layer;
mod loss;
mod network;
mod optim;

pub use gradcheck::{
    central_difference, finite_difference_check, finite_difference_check_with, relative_error,
    GradCheckReport, Objective,
};
pub use layer::{
    softmax_rows, DenseGrad, Layer, LayerKind, LayerSpec, Mode, PowerMode, DEFAULT_NORM_MOMENTUM,
};
pub use loss::{cross_entropy_loss_and_grad, CrossEntropy, PROB_FLOOR};
pub use network::{GradientSet, Network, Trace};
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState};
