use crate::error::{Error, Result};
use crate::ucb::{select_arm, PrecisionState, UcbScore};

/// Classical exploration scale `1 + sqrt(ln(2 / delta) / 2)`.
pub fn default_alpha(delta: f64) -> f64 {
    1.0 + ((2.0 / delta).ln() / 2.0).sqrt()
}

/// Ridge-regression UCB on raw flattened contexts. The design matrix is the
/// same [`PrecisionState`] the neural models use, fed with `x` directly.
#[derive(Debug, Clone, PartialEq)]
pub struct LinUcb {
    state: PrecisionState,
    alpha: f64,
}

impl LinUcb {
    pub fn new(lambda: f64, d: usize, alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha = {alpha} must be non-negative")));
        }
        Ok(Self {
            state: PrecisionState::new(lambda, d)?,
            alpha,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn state(&self) -> &PrecisionState {
        &self.state
    }

    /// `x^T theta_hat + alpha sqrt(x^T A^{-1} x)`.
    pub fn score(&self, x: &[f64]) -> Result<UcbScore> {
        if x.len() != self.state.dim() {
            return Err(Error::Dimension(format!(
                "context has {} entries, expected {}",
                x.len(),
                self.state.dim()
            )));
        }
        let mean: f64 = x
            .iter()
            .zip(self.state.theta_hat())
            .filter(|(xi, _)| **xi != 0.0)
            .map(|(xi, t)| xi * t)
            .sum();
        let width = self.state.quad_form(x).max(0.0).sqrt();
        let total = mean + self.alpha * width;
        Ok(UcbScore {
            mean,
            width,
            psi1: self.alpha,
            psi2: 0.0,
            psi3: 0.0,
            index: total,
            total,
        })
    }

    pub fn scores(&self, contexts: &[&[f64]]) -> Result<Vec<UcbScore>> {
        contexts.iter().map(|x| self.score(x)).collect()
    }

    pub fn select(&self, contexts: &[&[f64]]) -> Result<usize> {
        select_arm(&self.scores(contexts)?)
    }

    pub fn update(&mut self, x: &[f64], reward: f64) -> Result<()> {
        self.state.update_feature(x, reward)
    }
}
