//! The convolutional reward network: `L` zero-padded stride-1 convolutions
//! with a post-activation `1/sqrt(qm)` scale, then a linear read-out
//! `<W^{L+1}, h^L> / sqrt(m)`. No biases.

mod forward;
mod params;
mod patches;
mod topology;
mod train;

pub use forward::{forward, network_gradient, value_and_gradient, ForwardTrace};
pub use params::{init_params, param_distance, CnnParams, GradientVec};
pub use patches::{extract_patches, scatter_patches};
pub use topology::{Activation, ArmContext, NetTopology, Spatial};
pub use train::{loss, train_gd};
