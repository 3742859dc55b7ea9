use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{NeuralModel, TrainingHistory};
use crate::net::{Activation, ArmContext};

/// Samples per forward/backward block during training.
const CHUNK: usize = 64;

/// Fully-connected reward network on the flattened context:
/// `h^1 = sigma(W^1 x)/sqrt(m)`, `h^l = sigma(W^l h^{l-1})/sqrt(m)`,
/// `f = <w, h^{depth-1}>/sqrt(m)`. No biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FcTopology {
    depth: usize,
    width: usize,
    input_dim: usize,
    activation: Activation,
}

/// Weight matrices in layer order; the last one is the `1 x m` read-out.
#[derive(Debug, Clone, PartialEq)]
pub struct FcParams {
    layers: Vec<DMatrix<f64>>,
}

impl FcTopology {
    /// `depth` counts every weight layer including the read-out, so it must
    /// be at least 2.
    pub fn new(depth: usize, width: usize, input_dim: usize, activation: Activation) -> Result<Self> {
        if depth < 2 || width == 0 || input_dim == 0 {
            return Err(Error::InvalidTopology(format!(
                "fully-connected net needs depth >= 2, width >= 1, input >= 1 (got {depth}, {width}, {input_dim})"
            )));
        }
        Ok(Self {
            depth,
            width,
            input_dim,
            activation,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn shapes(&self) -> Vec<(usize, usize)> {
        let mut s = vec![(self.width, self.input_dim)];
        s.extend(std::iter::repeat_n((self.width, self.width), self.depth - 2));
        s.push((1, self.width));
        s
    }

    fn scale(&self) -> f64 {
        1.0 / (self.width as f64).sqrt()
    }

    /// Hidden weights `N(0, 1)`, read-out `N(0, 1/m)`.
    pub fn init_params(&self, seed: u64) -> FcParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shapes = self.shapes();
        let last = shapes.len() - 1;
        let layers = shapes
            .into_iter()
            .enumerate()
            .map(|(l, (r, c))| {
                let sd = if l == last { self.scale() } else { 1.0 };
                DMatrix::from_fn(r, c, |_, _| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    sd * z
                })
            })
            .collect();
        FcParams { layers }
    }

    fn check(&self, params: &FcParams) -> Result<()> {
        let ok = params.layers.len() == self.depth
            && params
                .layers
                .iter()
                .zip(self.shapes())
                .all(|(w, s)| w.shape() == s);
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension("parameters do not match the fully-connected topology".into()))
        }
    }

    fn stack<'a>(&self, xs: impl IntoIterator<Item = &'a ArmContext>) -> Result<DMatrix<f64>> {
        let mut data = Vec::new();
        for x in xs {
            let v = x.as_slice();
            if v.len() != self.input_dim {
                return Err(Error::Dimension(format!(
                    "context has {} entries, network expects {}",
                    v.len(),
                    self.input_dim
                )));
            }
            data.extend_from_slice(v);
        }
        let n = data.len() / self.input_dim;
        Ok(DMatrix::from_vec(self.input_dim, n, data))
    }

    /// Outputs for a column batch plus per-layer inputs and pre-activations.
    fn forward_batch(&self, params: &FcParams, x: DMatrix<f64>) -> Result<(Vec<f64>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
        let s = self.scale();
        let act = self.activation;
        let hidden = self.depth - 1;
        let mut inputs = vec![x];
        let mut pre = Vec::with_capacity(hidden);
        for (l, w) in params.layers[..hidden].iter().enumerate() {
            let h = inputs.last().expect("input present");
            let z = if l == 0 && is_sparse(h) {
                sparse_product(w, h)
            } else {
                w * h
            };
            let h = z.map(|v| s * act.value(v));
            if h.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericOverflow { layer: l + 1 });
            }
            pre.push(z);
            inputs.push(h);
        }
        let out = (&params.layers[hidden] * inputs.last().expect("hidden layer")) * s;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericOverflow { layer: self.depth });
        }
        Ok((out.as_slice().to_vec(), inputs, pre))
    }

    /// Gradient of `sum_b weights[b] f(x_b)` in flattened layer order.
    fn backward_batch(
        &self,
        params: &FcParams,
        inputs: &[DMatrix<f64>],
        pre: &[DMatrix<f64>],
        weights: &[f64],
    ) -> Vec<f64> {
        let s = self.scale();
        let act = self.activation;
        let hidden = self.depth - 1;
        let dout = DMatrix::from_row_slice(1, weights.len(), weights) * s;
        let mut grads = vec![DMatrix::zeros(0, 0); self.depth];
        grads[hidden] = (&inputs[hidden] * dout.transpose()).transpose();
        let mut dh = params.layers[hidden].transpose() * &dout;
        for l in (0..hidden).rev() {
            let mut dz = dh;
            for (d, z) in dz.as_mut_slice().iter_mut().zip(pre[l].as_slice()) {
                *d *= s * act.derivative(*z);
            }
            grads[l] = if l == 0 && is_sparse(&inputs[0]) {
                sparse_outer(&dz, &inputs[0])
            } else {
                (&inputs[l] * dz.transpose()).transpose()
            };
            if l == 0 {
                break;
            }
            dh = params.layers[l].transpose() * &dz;
        }
        grads.iter().flat_map(|g| g.as_slice().iter().copied()).collect()
    }
}

/// Image arms leave every other class block at zero; past this density the
/// dense product is faster.
fn is_sparse(x: &DMatrix<f64>) -> bool {
    x.iter().filter(|v| **v != 0.0).count() * 4 <= x.len()
}

/// `w x`, touching only the columns of `w` that meet non-zero inputs.
fn sparse_product(w: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut z = DMatrix::zeros(w.nrows(), x.ncols());
    for b in 0..x.ncols() {
        let mut col = z.column_mut(b);
        for (i, &v) in x.column(b).iter().enumerate() {
            if v != 0.0 {
                col.axpy(v, &w.column(i), 1.0);
            }
        }
    }
    z
}

/// `dz x^T` for a sparse `x`.
fn sparse_outer(dz: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(dz.nrows(), x.nrows());
    for b in 0..x.ncols() {
        for (i, &v) in x.column(b).iter().enumerate() {
            if v != 0.0 {
                g.column_mut(i).axpy(v, &dz.column(b), 1.0);
            }
        }
    }
    g
}

impl FcParams {
    pub fn layers(&self) -> &[DMatrix<f64>] {
        &self.layers
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|w| w.as_slice().iter().copied()).collect()
    }

    /// Replaces the read-out layer.
    pub fn with_output(&self, output: DMatrix<f64>) -> Result<Self> {
        let last = self.layers.len() - 1;
        if output.shape() != self.layers[last].shape() {
            return Err(Error::Dimension("read-out shape mismatch".into()));
        }
        let mut layers = self.layers.clone();
        layers[last] = output;
        Ok(Self { layers })
    }

    /// Inverse of [`FcParams::flatten`] for the layer shapes of `self`.
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        let total: usize = self.layers.iter().map(|w| w.len()).sum();
        if flat.len() != total {
            return Err(Error::Dimension(format!(
                "flat vector has {} entries, expected {total}",
                flat.len()
            )));
        }
        let mut offset = 0;
        let layers = self
            .layers
            .iter()
            .map(|w| {
                let next = DMatrix::from_column_slice(w.nrows(), w.ncols(), &flat[offset..offset + w.len()]);
                offset += w.len();
                next
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn step(&self, grad: &[f64], eta: f64) -> Self {
        let mut offset = 0;
        let layers = self
            .layers
            .iter()
            .map(|w| {
                let mut next = w.clone();
                for (v, g) in next.as_mut_slice().iter_mut().zip(&grad[offset..offset + w.len()]) {
                    *v -= eta * g;
                }
                offset += w.len();
                next
            })
            .collect();
        Self { layers }
    }
}

/// Output and flattened gradient of the fully-connected net at one context.
pub fn fc_forward_gradient(x: &ArmContext, params: &FcParams, topology: &FcTopology) -> Result<(f64, Vec<f64>)> {
    topology.check(params)?;
    let input = topology.stack(std::iter::once(x))?;
    let (out, inputs, pre) = topology.forward_batch(params, input)?;
    let g = topology.backward_batch(params, &inputs, &pre, &[1.0]);
    Ok((out[0], g))
}

impl NeuralModel for FcTopology {
    type Params = FcParams;

    fn width(&self) -> usize {
        self.width
    }

    fn param_count(&self) -> usize {
        self.shapes().iter().map(|(r, c)| r * c).sum()
    }

    fn init(&self, seed: u64) -> FcParams {
        self.init_params(seed)
    }

    fn value_and_gradient(&self, x: &ArmContext, params: &FcParams) -> Result<(f64, Vec<f64>)> {
        fc_forward_gradient(x, params, self)
    }

    fn loss_and_gradient(
        &self,
        params: &FcParams,
        history: &TrainingHistory,
        indices: &[usize],
    ) -> Result<(f64, Vec<f64>)> {
        self.check(params)?;
        let mut grad = vec![0.0; NeuralModel::param_count(self)];
        let mut total = 0.0;
        for chunk in indices.chunks(CHUNK) {
            let input = self.stack(chunk.iter().map(|&i| &history.contexts()[i]))?;
            let (out, inputs, pre) = self.forward_batch(params, input)?;
            let residuals: Vec<f64> = out
                .iter()
                .zip(chunk)
                .map(|(f, &i)| f - history.rewards()[i])
                .collect();
            total += residuals.iter().map(|e| 0.5 * e * e).sum::<f64>();
            for (a, g) in grad
                .iter_mut()
                .zip(self.backward_batch(params, &inputs, &pre, &residuals))
            {
                *a += g;
            }
        }
        Ok((total, grad))
    }

    fn step(&self, params: &FcParams, grad: &[f64], eta: f64) -> FcParams {
        params.step(grad, eta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net() -> FcTopology {
        FcTopology::new(4, 5, 6, Activation::Sigmoid).unwrap()
    }

    #[test]
    fn zero_readout_gives_zero_output() {
        let t = net();
        let p = t.init_params(1);
        let p = p.with_output(DMatrix::zeros(1, 5)).unwrap();
        let x = ArmContext::from_vector(&[0.2, 0.1, -0.3, 0.4, 0.0, 0.5]);
        assert_eq!(fc_forward_gradient(&x, &p, &t).unwrap().0, 0.0);
    }

    #[test]
    fn param_count_and_layout() {
        let t = net();
        let p = t.init_params(2);
        assert_eq!(NeuralModel::param_count(&t), 5 * 6 + 2 * 25 + 5);
        assert_eq!(p.flatten().len(), NeuralModel::param_count(&t));
        assert_eq!(p.with_flat(&p.flatten()).unwrap().flatten(), p.flatten());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let t = net();
        let p = t.init_params(3);
        let x = ArmContext::from_vector(&[0.2, 0.1, -0.3, 0.4, 0.0, 0.5]);
        let (_, g) = fc_forward_gradient(&x, &p, &t).unwrap();
        let theta = p.flatten();
        let eps = 1e-5;
        for i in 0..theta.len() {
            let mut plus = theta.clone();
            plus[i] += eps;
            let mut minus = theta.clone();
            minus[i] -= eps;
            let fp = fc_forward_gradient(&x, &p.with_flat(&plus).unwrap(), &t).unwrap().0;
            let fm = fc_forward_gradient(&x, &p.with_flat(&minus).unwrap(), &t).unwrap().0;
            let fd = (fp - fm) / (2.0 * eps);
            assert!((fd - g[i]).abs() <= 1e-4 * fd.abs().max(g[i].abs()).max(1e-6), "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn sparse_inputs_match_dense_computation() {
        // 3 of 12 inputs active takes the sparse first-layer path
        let t = FcTopology::new(3, 4, 12, Activation::Sigmoid).unwrap();
        let p = t.init_params(8);
        let mut v = vec![0.0; 12];
        v[2] = 0.5;
        v[3] = -0.2;
        v[7] = 0.4;
        let (f, g) = fc_forward_gradient(&ArmContext::from_vector(&v), &p, &t).unwrap();
        let w1 = &p.layers()[0];
        let x = DMatrix::from_column_slice(12, 1, &v);
        let s = 0.5;
        let h1 = (w1 * &x).map(|z| s * Activation::Sigmoid.value(z));
        let h2 = (&p.layers()[1] * &h1).map(|z| s * Activation::Sigmoid.value(z));
        let f_dense = (&p.layers()[2] * &h2)[(0, 0)] * s;
        assert!((f - f_dense).abs() < 1e-15);
        // first-layer gradient vanishes on inactive inputs
        for c in [0, 1, 4, 5, 6, 8, 9, 10, 11] {
            for r in 0..4 {
                assert_eq!(g[c * 4 + r], 0.0);
            }
        }
    }

    #[test]
    fn rejects_wrong_input_length() {
        let t = net();
        let p = t.init_params(0);
        assert!(fc_forward_gradient(&ArmContext::from_vector(&[1.0]), &p, &t).is_err());
        assert!(FcTopology::new(1, 5, 6, Activation::Sigmoid).is_err());
    }
}
