use serde::{Deserialize, Serialize};

use super::bounds::{psi2_psi3, TheoryConstants};
use super::precision::PrecisionState;
use crate::error::{Error, Result};
use crate::model::NeuralModel;
use crate::net::ArmContext;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ExploreMode {
    /// `mean + psi1 * width + psi2 + psi3`.
    Theoretical,
    /// `mean + nu * width`.
    #[default]
    Practical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExploreConfig {
    pub mode: ExploreMode,
    pub delta: f64,
    pub s_bar: f64,
    pub nu: f64,
    pub constants: TheoryConstants,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        Self {
            mode: ExploreMode::Practical,
            delta: 0.1,
            s_bar: 1.0,
            nu: 1.0,
            constants: TheoryConstants::default(),
        }
    }
}

impl ExploreConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta = {} must lie in (0, 1)", self.delta));
        }
        if !(self.s_bar > 0.0 && self.s_bar.is_finite()) {
            return bad(format!("s_bar = {} must be positive", self.s_bar));
        }
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return bad(format!("nu = {} must be non-negative", self.nu));
        }
        let c = self.constants;
        if !(c.c0 > 0.0 && c.c0.is_finite()) {
            return bad(format!("c0 = {} must be positive", c.c0));
        }
        for (name, v) in [("c1", c.c1), ("c2", c.c2)] {
            if !(v > 1.0 && v < 2.0) {
                return bad(format!("{name} = {v} must lie in (1, 2)"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UcbScore {
    pub mean: f64,
    pub width: f64,
    pub psi1: f64,
    pub psi2: f64,
    pub psi3: f64,
    /// The arm-dependent part `mean + scale * width`, with `scale` equal to
    /// `psi1` or `nu` depending on the mode.
    pub index: f64,
    pub total: f64,
}

/// `sqrt(logdet_ratio - 2 ln delta) + sqrt(lambda) * s_bar`.
pub fn psi1(state: &PrecisionState, cfg: &ExploreConfig) -> f64 {
    (state.logdet_ratio() - 2.0 * cfg.delta.ln()).max(0.0).sqrt() + state.lambda().sqrt() * cfg.s_bar
}

/// Exploration terms shared by every arm of one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundTerms {
    pub mode: ExploreMode,
    pub psi1: f64,
    pub psi2: f64,
    pub psi3: f64,
    /// Multiplier of the width in the total.
    pub scale: f64,
}

impl RoundTerms {
    /// `psi2`/`psi3` are evaluated at `t = state.rounds()`. Theoretical mode
    /// needs the model's architecture summary.
    pub fn new<M: NeuralModel>(model: &M, state: &PrecisionState, cfg: &ExploreConfig) -> Result<Self> {
        let p1 = psi1(state, cfg);
        match cfg.mode {
            ExploreMode::Practical => Ok(Self {
                mode: cfg.mode,
                psi1: p1,
                psi2: 0.0,
                psi3: 0.0,
                scale: cfg.nu,
            }),
            ExploreMode::Theoretical => {
                let shape = model.theory_shape().ok_or_else(|| {
                    Error::Config("theoretical exploration needs a convolutional model".into())
                })?;
                let (psi2, psi3) = psi2_psi3(&shape, cfg.constants, state.rounds(), state.lambda());
                Ok(Self {
                    mode: cfg.mode,
                    psi1: p1,
                    psi2,
                    psi3,
                    scale: p1,
                })
            }
        }
    }

    pub fn score(&self, mean: f64, width: f64) -> UcbScore {
        score_from_parts(mean, width, self)
    }
}

/// Assembles a score. The total is computed as `index + (psi2 + psi3)`, so it
/// is a non-decreasing function of the index and both modes rank arms alike.
pub fn score_from_parts(mean: f64, width: f64, terms: &RoundTerms) -> UcbScore {
    let index = mean + terms.scale * width;
    let total = match terms.mode {
        ExploreMode::Practical => index,
        ExploreMode::Theoretical => index + (terms.psi2 + terms.psi3),
    };
    UcbScore {
        mean,
        width,
        psi1: terms.psi1,
        psi2: terms.psi2,
        psi3: terms.psi3,
        index,
        total,
    }
}

/// Scores one arm with the gradient at the current parameters. Also returns
/// that gradient so the caller can feed it to the precision update.
pub fn score_arm<M: NeuralModel>(
    model: &M,
    x: &ArmContext,
    params: &M::Params,
    state: &PrecisionState,
    terms: &RoundTerms,
) -> Result<(UcbScore, Vec<f64>)> {
    if state.dim() != model.param_count() {
        return Err(Error::Dimension(format!(
            "state dimension {} but model has {} parameters",
            state.dim(),
            model.param_count()
        )));
    }
    let (mean, g) = model.value_and_gradient(x, params)?;
    let width = state.width(&g, model.width())?;
    Ok((terms.score(mean, width), g))
}

/// [`score_arm`] for every arm of a round, with the widths computed in one
/// batch.
pub fn score_arms<M: NeuralModel>(
    model: &M,
    arms: &[ArmContext],
    params: &M::Params,
    state: &PrecisionState,
    terms: &RoundTerms,
) -> Result<(Vec<UcbScore>, Vec<Vec<f64>>)> {
    if state.dim() != model.param_count() {
        return Err(Error::Dimension(format!(
            "state dimension {} but model has {} parameters",
            state.dim(),
            model.param_count()
        )));
    }
    let (means, grads): (Vec<f64>, Vec<Vec<f64>>) = arms
        .iter()
        .map(|x| model.value_and_gradient(x, params))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let widths = state.widths(&grads, model.width())?;
    let scores = means.iter().zip(&widths).map(|(&m, &w)| terms.score(m, w)).collect();
    Ok((scores, grads))
}

/// Index of the largest total. Equal totals fall back to the larger index
/// field, then to the lowest position.
pub fn select_arm(scores: &[UcbScore]) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::EmptyArms);
    }
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        let b = &scores[best];
        if s.total > b.total || (s.total == b.total && s.index > b.index) {
            best = i;
        }
    }
    Ok(best)
}
