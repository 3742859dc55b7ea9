use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{BanditSection, Bandwidth, KernelUcbSection};
use crate::baselines::{KernelUcb, LinUcb};
use crate::error::{Error, Result};
use crate::model::{gradient_descent, minibatch_descent, NeuralModel, TrainingHistory};
use crate::net::ArmContext;
use crate::theory::RunArtifacts;
use crate::ucb::{score_arms, select_arm, ExploreConfig, PrecisionState, RoundTerms, UcbScore};

/// The selected arm and the score it was selected with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Choice {
    pub arm: usize,
    pub score: UcbScore,
}

/// One online learner: picks an arm, then learns from its reward.
pub trait Policy {
    fn choose(&mut self, arms: &[ArmContext]) -> Result<Choice>;

    /// Must follow the `choose` call for the same arms.
    fn observe(&mut self, arms: &[ArmContext], chosen: usize, reward: f64) -> Result<()>;

    /// Log-det check material, for policies that keep it.
    fn artifacts(&self) -> Option<RunArtifacts> {
        None
    }
}

fn check_arms(arms: &[ArmContext]) -> Result<()> {
    if arms.is_empty() {
        Err(Error::EmptyArms)
    } else {
        Ok(())
    }
}

/// Gradient-feature UCB over any [`NeuralModel`]: score with the gradient at
/// the current parameters, absorb the chosen gradient into the precision
/// state, then retrain on the whole history.
pub struct NeuralUcbPolicy<M: NeuralModel> {
    model: M,
    params0: M::Params,
    params: M::Params,
    state: PrecisionState,
    explore: ExploreConfig,
    bandit: BanditSection,
    history: TrainingHistory,
    grads: Vec<Vec<f64>>,
    rng: ChaCha8Rng,
    init_features: Option<Vec<Vec<f64>>>,
}

impl<M: NeuralModel> NeuralUcbPolicy<M> {
    pub fn new(model: M, seed: u64, explore: ExploreConfig, bandit: BanditSection, store_init_features: bool) -> Result<Self> {
        let d = model.param_count();
        let state = if bandit.use_full(d) {
            PrecisionState::new(bandit.lambda, d)?
        } else {
            PrecisionState::new_diagonal(bandit.lambda, d)?
        };
        let params0 = model.init(seed);
        Ok(Self {
            params: params0.clone(),
            params0,
            model,
            state,
            explore,
            bandit,
            history: TrainingHistory::new(),
            grads: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5851_f42d_4c95_7f2d),
            init_features: store_init_features.then(Vec::new),
        })
    }

    pub fn state(&self) -> &PrecisionState {
        &self.state
    }

    pub fn params(&self) -> &M::Params {
        &self.params
    }
}

impl<M: NeuralModel> Policy for NeuralUcbPolicy<M> {
    fn choose(&mut self, arms: &[ArmContext]) -> Result<Choice> {
        check_arms(arms)?;
        let terms = RoundTerms::new(&self.model, &self.state, &self.explore)?;
        let (scores, grads) = score_arms(&self.model, arms, &self.params, &self.state, &terms)?;
        let arm = select_arm(&scores)?;
        self.grads = grads;
        Ok(Choice { arm, score: scores[arm] })
    }

    fn observe(&mut self, arms: &[ArmContext], chosen: usize, reward: f64) -> Result<()> {
        let x = arms.get(chosen).ok_or(Error::EmptyArms)?;
        let g = if chosen < self.grads.len() {
            self.grads.swap_remove(chosen)
        } else {
            self.model.value_and_gradient(x, &self.params)?.1
        };
        let m = self.model.width();
        self.state.update(&g, m, reward)?;
        if let Some(store) = &mut self.init_features {
            let (_, g0) = self.model.value_and_gradient(x, &self.params0)?;
            let s = 1.0 / (m as f64).sqrt();
            store.push(g0.iter().map(|v| v * s).collect());
        }
        self.grads.clear();
        self.history.push(x.clone(), reward);

        let k = self.bandit.steps(self.history.len());
        let start = if self.bandit.warm_start { &self.params } else { &self.params0 };
        self.params = match self.bandit.batch_size {
            None => gradient_descent(&self.model, start, &self.history, self.bandit.eta, k)?,
            Some(b) => minibatch_descent(&self.model, start, &self.history, self.bandit.eta, k, b, &mut self.rng)?,
        };
        Ok(())
    }

    fn artifacts(&self) -> Option<RunArtifacts> {
        Some(RunArtifacts {
            lambda: self.state.lambda(),
            logdet_ratio: self.state.logdet_ratio(),
            init_features: self.init_features.clone(),
        })
    }
}

/// LinUCB on the flattened context.
pub struct LinUcbPolicy {
    inner: Option<LinUcb>,
    lambda: f64,
    alpha: f64,
}

impl LinUcbPolicy {
    /// The dimension is taken from the first round's arms.
    pub fn new(lambda: f64, alpha: f64) -> Self {
        Self {
            inner: None,
            lambda,
            alpha,
        }
    }
}

impl Policy for LinUcbPolicy {
    fn choose(&mut self, arms: &[ArmContext]) -> Result<Choice> {
        check_arms(arms)?;
        if self.inner.is_none() {
            self.inner = Some(LinUcb::new(self.lambda, arms[0].as_slice().len(), self.alpha)?);
        }
        let lin = self.inner.as_ref().expect("initialised above");
        let xs: Vec<&[f64]> = arms.iter().map(|a| a.as_slice()).collect();
        let scores = lin.scores(&xs)?;
        let arm = select_arm(&scores)?;
        Ok(Choice { arm, score: scores[arm] })
    }

    fn observe(&mut self, arms: &[ArmContext], chosen: usize, reward: f64) -> Result<()> {
        let lin = self.inner.as_mut().ok_or(Error::EmptyHistory)?;
        lin.update(arms[chosen].as_slice(), reward)
    }
}

/// RBF-kernel UCB on the flattened context.
pub struct KernelUcbPolicy {
    inner: Option<KernelUcb>,
    settings: KernelUcbSection,
    lambda: f64,
    beta: f64,
}

impl KernelUcbPolicy {
    /// The bandwidth is resolved from the first round's arms.
    pub fn new(settings: KernelUcbSection, lambda: f64, beta: f64) -> Self {
        Self {
            inner: None,
            settings,
            lambda,
            beta,
        }
    }

    fn gamma(&self, arms: &[ArmContext]) -> f64 {
        if let Some(g) = self.settings.gamma {
            return g;
        }
        let inverse_dim = 1.0 / arms[0].as_slice().len() as f64;
        match self.settings.bandwidth {
            Bandwidth::InverseDim => inverse_dim,
            Bandwidth::Median => {
                let xs: Vec<&[f64]> = arms.iter().map(|a| a.as_slice()).collect();
                KernelUcb::median_gamma(&xs).unwrap_or(inverse_dim)
            }
        }
    }
}

impl Policy for KernelUcbPolicy {
    fn choose(&mut self, arms: &[ArmContext]) -> Result<Choice> {
        check_arms(arms)?;
        if self.inner.is_none() {
            let gamma = self.gamma(arms);
            self.inner = Some(KernelUcb::new(gamma, self.lambda, self.beta, self.settings.capacity)?);
        }
        let k = self.inner.as_ref().expect("initialised above");
        let scores: Vec<UcbScore> = arms.iter().map(|a| k.score(a.as_slice())).collect();
        let arm = select_arm(&scores)?;
        Ok(Choice { arm, score: scores[arm] })
    }

    fn observe(&mut self, arms: &[ArmContext], chosen: usize, reward: f64) -> Result<()> {
        let k = self.inner.as_mut().ok_or(Error::EmptyHistory)?;
        k.update(arms[chosen].as_slice(), reward)
    }
}

/// Uniformly random arm; the regret sanity anchor.
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x2545_f491_4f6c_dd1d),
        }
    }
}

impl Policy for RandomPolicy {
    fn choose(&mut self, arms: &[ArmContext]) -> Result<Choice> {
        check_arms(arms)?;
        let arm = self.rng.random_range(0..arms.len());
        Ok(Choice {
            arm,
            score: UcbScore {
                mean: 0.0,
                width: 0.0,
                psi1: 0.0,
                psi2: 0.0,
                psi3: 0.0,
                index: 0.0,
                total: 0.0,
            },
        })
    }

    fn observe(&mut self, _arms: &[ArmContext], _chosen: usize, _reward: f64) -> Result<()> {
        Ok(())
    }
}
