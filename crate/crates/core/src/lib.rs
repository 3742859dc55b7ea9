//! CNN-UCB: a contextual bandit whose reward model is a convolutional network
//! trained by gradient descent, exploring through an upper confidence bound
//! built from the network gradient.
//!
//! - [`net`]: the network, its analytic gradient and training.
//! - [`ucb`]: precision-matrix state, arm scoring, CNTK and bound formulas.
//! - [`baselines`]: LinUCB, RBF kernel UCB and a fully-connected neural UCB.
//! - [`data`]: IDX / CIFAR-10 readers, classification-to-bandit rounds and
//!   synthetic reward streams.
//! - [`theory`]: finite-width checks of the analysis (width sweeps, the
//!   interpolating parameter construction, log-det reports).
//! - [`bench`]: experiment configuration, the bandit loop and CSV outputs.

pub mod baselines;
pub mod bench;
pub mod data;
pub mod error;
pub mod model;
pub mod net;
pub mod theory;
pub mod ucb;

pub use error::{Error, Result};
