//! Finite-width checks of the analysis: the interpolating parameter
//! construction, drift-versus-width sweeps and the log-det report.

mod interpolation;
mod logdet;
mod sweep;

pub use interpolation::{construct_from_gradients, construct_theta_star, random_instance, ThetaStar};
pub use logdet::{logdet_report, LogdetReport, RunArtifacts};
pub use sweep::{width_sweep, SweepConfig, SweepReport, SweepStat, WidthResult};
