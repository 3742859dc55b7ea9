//! Comparison algorithms: LinUCB, RBF kernel UCB and a fully-connected
//! neural UCB that shares the convolutional model's precision machinery.

mod fc;
mod kernelucb;
mod linucb;

pub use fc::{fc_forward_gradient, FcParams, FcTopology};
pub use kernelucb::KernelUcb;
pub use linucb::{default_alpha, LinUcb};
