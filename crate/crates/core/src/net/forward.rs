use nalgebra::DMatrix;

use super::params::{CnnParams, GradientVec};
use super::patches::{col2im, im2col};
use super::topology::{ArmContext, NetTopology};
use crate::error::{Error, Result};

/// Every intermediate of one forward evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `h^1 .. h^L`, each `m x p`.
    pub layers: Vec<DMatrix<f64>>,
    /// `W^l phi(h^{l-1})` for every conv layer.
    pub preactivations: Vec<DMatrix<f64>>,
    pub output: f64,
}

/// Forward state of a batch of samples laid side by side, `p` columns each.
pub(crate) struct BatchPass {
    patches: Vec<DMatrix<f64>>,
    pre: Vec<DMatrix<f64>>,
    hidden: Vec<DMatrix<f64>>,
    pub(crate) outputs: Vec<f64>,
}

/// Stacks contexts column-wise into one `c x (p * n)` input.
pub(crate) fn stack_inputs<'a>(
    contexts: impl IntoIterator<Item = &'a ArmContext>,
    topology: &NetTopology,
) -> Result<DMatrix<f64>> {
    let c = topology.in_channels();
    let mut data = Vec::new();
    for x in contexts {
        x.check(topology)?;
        data.extend_from_slice(x.values().as_slice());
    }
    let cols = data.len() / c;
    Ok(DMatrix::from_vec(c, cols, data))
}

pub(crate) fn forward_batch(
    topology: &NetTopology,
    params: &CnnParams,
    input: DMatrix<f64>,
) -> Result<BatchPass> {
    let act = topology.activation();
    let scale = topology.layer_scale();
    let p = topology.pixels();
    let mut patches = Vec::with_capacity(topology.layers());
    let mut pre = Vec::with_capacity(topology.layers());
    let mut hidden: Vec<DMatrix<f64>> = Vec::with_capacity(topology.layers());
    for (i, w) in params.conv().iter().enumerate() {
        let phi = im2col(hidden.last().unwrap_or(&input), topology);
        let z = w * &phi;
        let h = z.map(|v| scale * act.value(v));
        if !h.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericOverflow { layer: i + 1 });
        }
        patches.push(phi);
        pre.push(z);
        hidden.push(h);
    }
    let last = hidden.last().expect("at least one conv layer");
    let w_out = params.output().as_slice();
    let inv_sqrt_m = 1.0 / (topology.channels() as f64).sqrt();
    let block = topology.channels() * p;
    let outputs: Vec<f64> = last
        .as_slice()
        .chunks_exact(block)
        .map(|h| inv_sqrt_m * h.iter().zip(w_out).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    if outputs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericOverflow {
            layer: topology.layers() + 1,
        });
    }
    Ok(BatchPass {
        patches,
        pre,
        hidden,
        outputs,
    })
}

/// Gradient of `sum_b weights[b] * f(x_b)` with respect to every layer.
pub(crate) fn backward_batch(
    topology: &NetTopology,
    params: &CnnParams,
    pass: &BatchPass,
    weights: &[f64],
) -> (Vec<DMatrix<f64>>, DMatrix<f64>) {
    let m = topology.channels();
    let p = topology.pixels();
    let act = topology.activation();
    let scale = topology.layer_scale();
    let inv_sqrt_m = 1.0 / (m as f64).sqrt();
    let block = m * p;
    let w_out = params.output().as_slice();
    let last = pass.hidden.last().expect("at least one conv layer");

    let mut grad_out = DMatrix::<f64>::zeros(m, p);
    let mut dh = DMatrix::<f64>::zeros(m, last.ncols());
    for (b, &wb) in weights.iter().enumerate() {
        let h = &last.as_slice()[b * block..(b + 1) * block];
        for (g, hv) in grad_out.as_mut_slice().iter_mut().zip(h) {
            *g += wb * inv_sqrt_m * hv;
        }
        for (d, wv) in dh.as_mut_slice()[b * block..(b + 1) * block].iter_mut().zip(w_out) {
            *d = wb * inv_sqrt_m * wv;
        }
    }

    let mut grad_conv = vec![DMatrix::<f64>::zeros(0, 0); topology.layers()];
    for l in (0..topology.layers()).rev() {
        let mut dz = dh;
        for (d, z) in dz.as_mut_slice().iter_mut().zip(pass.pre[l].as_slice()) {
            *d *= scale * act.derivative(*z);
        }
        // (patches dz^T)^T avoids materialising the large transposed patch matrix
        grad_conv[l] = (&pass.patches[l] * dz.transpose()).transpose();
        if l == 0 {
            break;
        }
        // the weight transpose is small; tr_mul on the wide dz is far slower than GEMM
        let dphi = params.conv()[l].transpose() * &dz;
        dh = col2im(&dphi, topology);
    }
    (grad_conv, grad_out)
}

/// Evaluates the network on one context and keeps every intermediate.
pub fn forward(x: &ArmContext, params: &CnnParams, topology: &NetTopology) -> Result<ForwardTrace> {
    params.check(topology)?;
    let input = stack_inputs(std::iter::once(x), topology)?;
    let pass = forward_batch(topology, params, input)?;
    Ok(ForwardTrace {
        layers: pass.hidden,
        preactivations: pass.pre,
        output: pass.outputs[0],
    })
}

/// `f(x; theta)` and its gradient with respect to all parameters.
pub fn value_and_gradient(
    x: &ArmContext,
    params: &CnnParams,
    topology: &NetTopology,
) -> Result<(f64, GradientVec)> {
    params.check(topology)?;
    let input = stack_inputs(std::iter::once(x), topology)?;
    let pass = forward_batch(topology, params, input)?;
    let (conv, out) = backward_batch(topology, params, &pass, &[1.0]);
    Ok((pass.outputs[0], GradientVec::from_layers(&conv, &out)))
}

pub fn network_gradient(
    x: &ArmContext,
    params: &CnnParams,
    topology: &NetTopology,
) -> Result<GradientVec> {
    value_and_gradient(x, params, topology).map(|(_, g)| g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{init_params, Activation, Spatial};
    use approx::assert_abs_diff_eq;

    fn scalar_net() -> (NetTopology, CnnParams, ArmContext) {
        let t = NetTopology::new(1, 1, 1, 1, Spatial::Line(1), Activation::Sigmoid).unwrap();
        let params = CnnParams::new(
            vec![DMatrix::from_element(1, 1, 2.0)],
            DMatrix::from_element(1, 1, 3.0),
            &t,
        )
        .unwrap();
        (t, params, ArmContext::from_vector(&[1.0]))
    }

    #[test]
    fn scalar_network_by_hand() {
        let (t, params, x) = scalar_net();
        let trace = forward(&x, &params, &t).unwrap();
        let s = 1.0 / (1.0 + (-2.0f64).exp());
        assert_abs_diff_eq!(trace.layers[0][(0, 0)], s, epsilon = 1e-15);
        assert_abs_diff_eq!(s, 0.880797, epsilon = 1e-6);
        assert_abs_diff_eq!(trace.output, 2.642391, epsilon = 1e-6);

        let g = network_gradient(&x, &params, &t).unwrap();
        assert_abs_diff_eq!(g.flat[1], 0.880797, epsilon = 1e-6);
        assert_abs_diff_eq!(g.flat[0], 3.0 * s * (1.0 - s), epsilon = 1e-15);
        assert_abs_diff_eq!(g.flat[0], 0.314982, epsilon = 5e-6);
    }

    #[test]
    fn zero_weights_give_half_scaled_activations() {
        let t = NetTopology::new(2, 3, 3, 2, Spatial::Line(4), Activation::Sigmoid).unwrap();
        let x = ArmContext::new(DMatrix::from_element(2, 4, 0.3), Spatial::Line(4)).unwrap();
        let trace = forward(&x, &CnnParams::zeros(&t), &t).unwrap();
        let expected = 0.5 / (9.0f64).sqrt();
        assert!(trace.layers[0].iter().all(|&v| (v - expected).abs() < 1e-15));
        assert_eq!(trace.output, 0.0);
    }

    #[test]
    fn zero_output_layer_blocks_conv_gradients() {
        let t = NetTopology::new(2, 3, 3, 1, Spatial::Line(5), Activation::Softplus).unwrap();
        let p0 = init_params(&t, 2);
        let params = CnnParams::new(p0.conv().to_vec(), DMatrix::zeros(3, 5), &t).unwrap();
        let x = ArmContext::from_vector(&[0.1, -0.4, 0.3, 0.8, 0.2]);
        let g = network_gradient(&x, &params, &t).unwrap();
        let conv_len = t.param_count() - 15;
        assert!(g.flat[..conv_len].iter().all(|&v| v == 0.0));
        assert!(g.flat[conv_len..].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn forward_is_deterministic() {
        let t = NetTopology::new(2, 4, 3, 1, Spatial::Line(9), Activation::Sigmoid).unwrap();
        let params = init_params(&t, 11);
        let x = ArmContext::from_vector(&[0.3; 9]);
        assert_eq!(forward(&x, &params, &t).unwrap(), forward(&x, &params, &t).unwrap());
    }

    #[test]
    fn overflow_names_the_layer() {
        let t = NetTopology::new(1, 1, 1, 1, Spatial::Line(1), Activation::Softplus).unwrap();
        let params = CnnParams::new(
            vec![DMatrix::from_element(1, 1, f64::MAX)],
            DMatrix::from_element(1, 1, 1.0),
            &t,
        )
        .unwrap();
        let err = forward(&ArmContext::from_vector(&[10.0]), &params, &t).unwrap_err();
        assert!(matches!(err, Error::NumericOverflow { layer: 1 }));
    }

    #[test]
    fn mismatched_context_is_rejected() {
        let (t, params, _) = scalar_net();
        let x = ArmContext::from_vector(&[1.0, 2.0]);
        assert!(matches!(forward(&x, &params, &t), Err(Error::Dimension(_))));
    }
}
