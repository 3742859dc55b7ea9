//! What the UCB engine needs from a reward network, and the gradient-descent
//! procedures shared by the convolutional and fully-connected models.

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::net::ArmContext;
use crate::ucb::TheoryShape;

/// Observed `(context, reward)` pairs in arrival order. Append-only.
#[derive(Debug, Clone, Default)]
pub struct TrainingHistory {
    contexts: Vec<ArmContext>,
    rewards: Vec<f64>,
}

impl TrainingHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(contexts: Vec<ArmContext>, rewards: Vec<f64>) -> Result<Self> {
        if contexts.len() != rewards.len() {
            return Err(Error::Dimension(format!(
                "{} contexts but {} rewards",
                contexts.len(),
                rewards.len()
            )));
        }
        Ok(Self { contexts, rewards })
    }

    pub fn push(&mut self, context: ArmContext, reward: f64) {
        self.contexts.push(context);
        self.rewards.push(reward);
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn contexts(&self) -> &[ArmContext] {
        &self.contexts
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }
}

/// A differentiable reward model `f(x; theta)`.
pub trait NeuralModel {
    type Params: Clone;

    /// Width `m` used to normalise gradient features as `g / sqrt(m)`.
    fn width(&self) -> usize;

    fn param_count(&self) -> usize;

    fn init(&self, seed: u64) -> Self::Params;

    /// Output and flattened gradient at one context.
    fn value_and_gradient(&self, x: &ArmContext, params: &Self::Params) -> Result<(f64, Vec<f64>)>;

    /// Quadratic loss `1/2 sum (f(x_i) - r_i)^2` over `indices` of the history
    /// and its flattened gradient.
    fn loss_and_gradient(
        &self,
        params: &Self::Params,
        history: &TrainingHistory,
        indices: &[usize],
    ) -> Result<(f64, Vec<f64>)>;

    /// `params - eta * grad`.
    fn step(&self, params: &Self::Params, grad: &[f64], eta: f64) -> Self::Params;

    /// Architecture summary for the confidence-bound formulas, if they apply.
    fn theory_shape(&self) -> Option<TheoryShape> {
        None
    }
}

fn check_training_args(history: &TrainingHistory, eta: f64, k: usize) -> Result<()> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidParameter(format!("learning rate {eta} must be positive")));
    }
    if k > 0 && history.is_empty() {
        return Err(Error::EmptyHistory);
    }
    Ok(())
}

fn diverged_at(iteration: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NumericOverflow { .. } => Error::Diverged { iteration },
        other => other,
    }
}

/// `k` full-batch steps from `start`, also returning the loss before every
/// step and after the last one.
pub fn gradient_descent_traced<M: NeuralModel>(
    model: &M,
    start: &M::Params,
    history: &TrainingHistory,
    eta: f64,
    k: usize,
) -> Result<(M::Params, Vec<f64>)> {
    check_training_args(history, eta, k)?;
    let all: Vec<usize> = (0..history.len()).collect();
    let mut params = start.clone();
    let mut losses = Vec::with_capacity(k + 1);
    for i in 1..=k {
        let (loss, grad) = model
            .loss_and_gradient(&params, history, &all)
            .map_err(diverged_at(i))?;
        if !loss.is_finite() {
            return Err(Error::Diverged { iteration: i });
        }
        losses.push(loss);
        params = model.step(&params, &grad, eta);
    }
    if k > 0 {
        let (loss, _) = model
            .loss_and_gradient(&params, history, &all)
            .map_err(diverged_at(k))?;
        if !loss.is_finite() {
            return Err(Error::Diverged { iteration: k });
        }
        losses.push(loss);
    }
    Ok((params, losses))
}

/// `k` full-batch gradient steps on the loss over the whole history.
pub fn gradient_descent<M: NeuralModel>(
    model: &M,
    start: &M::Params,
    history: &TrainingHistory,
    eta: f64,
    k: usize,
) -> Result<M::Params> {
    check_training_args(history, eta, k)?;
    let all: Vec<usize> = (0..history.len()).collect();
    let mut params = start.clone();
    for i in 1..=k {
        let (loss, grad) = model
            .loss_and_gradient(&params, history, &all)
            .map_err(diverged_at(i))?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { iteration: i });
        }
        params = model.step(&params, &grad, eta);
    }
    Ok(params)
}

/// `k` steps, each on the summed loss of `batch` history entries drawn
/// without replacement. Falls back to the full history when it is smaller
/// than `batch`.
pub fn minibatch_descent<M: NeuralModel, R: Rng>(
    model: &M,
    start: &M::Params,
    history: &TrainingHistory,
    eta: f64,
    k: usize,
    batch: usize,
    rng: &mut R,
) -> Result<M::Params> {
    check_training_args(history, eta, k)?;
    if batch == 0 {
        return Err(Error::InvalidParameter("batch size must be positive".into()));
    }
    let n = history.len();
    let mut params = start.clone();
    for i in 1..=k {
        let mut indices = if n <= batch {
            (0..n).collect()
        } else {
            index::sample(rng, n, batch).into_vec()
        };
        indices.sort_unstable();
        let (loss, grad) = model
            .loss_and_gradient(&params, history, &indices)
            .map_err(diverged_at(i))?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { iteration: i });
        }
        params = model.step(&params, &grad, eta);
    }
    Ok(params)
}
