use nalgebra::DMatrix;

use super::forward::{backward_batch, forward_batch, stack_inputs, value_and_gradient};
use super::params::{init_params, CnnParams, GradientVec};
use super::topology::{ArmContext, NetTopology};
use crate::error::{Error, Result};
use crate::model::{self, NeuralModel, TrainingHistory};
use crate::ucb::TheoryShape;

/// Samples per forward/backward block during training; bounds the memory held
/// by the stacked patch matrices.
const CHUNK: usize = 32;

/// `1/2 sum_i (f(x_i; theta) - r_i)^2` over the whole history.
pub fn loss(history: &TrainingHistory, params: &CnnParams, topology: &NetTopology) -> Result<f64> {
    if history.is_empty() {
        return Err(Error::EmptyHistory);
    }
    params.check(topology)?;
    let mut total = 0.0;
    for (xs, rs) in history
        .contexts()
        .chunks(CHUNK)
        .zip(history.rewards().chunks(CHUNK))
    {
        let pass = forward_batch(topology, params, stack_inputs(xs, topology)?)?;
        total += pass
            .outputs
            .iter()
            .zip(rs)
            .map(|(f, r)| 0.5 * (f - r).powi(2))
            .sum::<f64>();
    }
    Ok(total)
}

/// Exactly `k` full-batch gradient-descent steps starting at `params0`.
pub fn train_gd(
    params0: &CnnParams,
    history: &TrainingHistory,
    eta: f64,
    k: usize,
    topology: &NetTopology,
) -> Result<CnnParams> {
    params0.check(topology)?;
    model::gradient_descent(topology, params0, history, eta, k)
}

impl NeuralModel for NetTopology {
    type Params = CnnParams;

    fn width(&self) -> usize {
        self.channels()
    }

    fn param_count(&self) -> usize {
        NetTopology::param_count(self)
    }

    fn init(&self, seed: u64) -> CnnParams {
        init_params(self, seed)
    }

    fn value_and_gradient(&self, x: &ArmContext, params: &CnnParams) -> Result<(f64, Vec<f64>)> {
        value_and_gradient(x, params, self).map(|(f, g)| (f, g.flat))
    }

    fn loss_and_gradient(
        &self,
        params: &CnnParams,
        history: &TrainingHistory,
        indices: &[usize],
    ) -> Result<(f64, Vec<f64>)> {
        let mut grad_conv: Vec<DMatrix<f64>> =
            params.conv().iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect();
        let mut grad_out = DMatrix::zeros(params.output().nrows(), params.output().ncols());
        let mut total = 0.0;
        for chunk in indices.chunks(CHUNK) {
            let input = stack_inputs(chunk.iter().map(|&i| &history.contexts()[i]), self)?;
            let pass = forward_batch(self, params, input)?;
            let residuals: Vec<f64> = pass
                .outputs
                .iter()
                .zip(chunk)
                .map(|(f, &i)| f - history.rewards()[i])
                .collect();
            total += residuals.iter().map(|e| 0.5 * e * e).sum::<f64>();
            let (conv, out) = backward_batch(self, params, &pass, &residuals);
            for (acc, g) in grad_conv.iter_mut().zip(&conv) {
                *acc += g;
            }
            grad_out += &out;
        }
        Ok((total, GradientVec::from_layers(&grad_conv, &grad_out).flat))
    }

    fn step(&self, params: &CnnParams, grad: &[f64], eta: f64) -> CnnParams {
        params.step(grad, eta)
    }

    fn theory_shape(&self) -> Option<TheoryShape> {
        Some(TheoryShape {
            layers: self.layers(),
            width: self.channels(),
            patch: self.patch(),
            pixels: self.pixels(),
            mu: self.mu(),
        })
    }
}
