//! Bandit state and decision rule.

mod bounds;
mod cntk;
mod precision;
mod score;

pub use bounds::{
    drift_bounds, psi2_psi3, regret_bound, theory_bounds, BoundInputs, BoundReport, DriftBounds,
    TheoryConstants, TheoryShape,
};
pub use cntk::{
    cntk_kernel, cntk_predict, dual_ridge, effective_dimension, effective_dimension_from_gram, gram,
    scaled_gradients,
};
pub use precision::PrecisionState;
pub use score::{psi1, score_arm, score_arms, score_from_parts, select_arm, ExploreConfig, ExploreMode, RoundTerms, UcbScore};
