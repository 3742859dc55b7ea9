use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::topology::NetTopology;
use crate::error::{Error, Result};

/// Network weights `W^1 .. W^L` and the output layer `W^{L+1}` (`m x p`).
///
/// Values are never mutated in place; training produces a new value.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnParams {
    conv: Vec<DMatrix<f64>>,
    output: DMatrix<f64>,
}

/// Flattened gradient in layer order `vec(W^1), ..., vec(W^{L+1})`, each
/// matrix vectorized column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVec {
    pub flat: Vec<f64>,
    pub per_layer_norms: Vec<f64>,
}

impl GradientVec {
    pub(crate) fn from_layers(conv: &[DMatrix<f64>], output: &DMatrix<f64>) -> Self {
        let len = conv.iter().map(|w| w.len()).sum::<usize>() + output.len();
        let mut flat = Vec::with_capacity(len);
        let mut per_layer_norms = Vec::with_capacity(conv.len() + 1);
        for w in conv.iter().chain(std::iter::once(output)) {
            flat.extend_from_slice(w.as_slice());
            per_layer_norms.push(w.norm());
        }
        Self {
            flat,
            per_layer_norms,
        }
    }

    pub fn norm(&self) -> f64 {
        self.flat.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Draws `W^1..W^L` i.i.d. `N(0, 1)` and `W^{L+1}` i.i.d. `N(0, 1/m)`.
pub fn init_params(topology: &NetTopology, seed: u64) -> CnnParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = topology.channels();
    let q = topology.patch();
    let mut conv = Vec::with_capacity(topology.layers());
    for l in 1..=topology.layers() {
        let cols = q * topology.layer_inputs(l);
        conv.push(DMatrix::from_fn(m, cols, |_, _| {
            StandardNormal.sample(&mut rng)
        }));
    }
    let sd = 1.0 / (m as f64).sqrt();
    let output = DMatrix::from_fn(m, topology.pixels(), |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        sd * z
    });
    CnnParams { conv, output }
}

impl CnnParams {
    pub fn new(conv: Vec<DMatrix<f64>>, output: DMatrix<f64>, topology: &NetTopology) -> Result<Self> {
        let params = Self { conv, output };
        params.check(topology)?;
        Ok(params)
    }

    /// All-zero weights, mostly useful for tests and degenerate checks.
    pub fn zeros(topology: &NetTopology) -> Self {
        let m = topology.channels();
        let conv = (1..=topology.layers())
            .map(|l| DMatrix::zeros(m, topology.patch() * topology.layer_inputs(l)))
            .collect();
        Self {
            conv,
            output: DMatrix::zeros(m, topology.pixels()),
        }
    }

    pub fn conv(&self) -> &[DMatrix<f64>] {
        &self.conv
    }

    pub fn output(&self) -> &DMatrix<f64> {
        &self.output
    }

    pub fn param_count(&self) -> usize {
        self.conv.iter().map(|w| w.len()).sum::<usize>() + self.output.len()
    }

    pub fn check(&self, topology: &NetTopology) -> Result<()> {
        let m = topology.channels();
        if self.conv.len() != topology.layers() {
            return Err(Error::Dimension(format!(
                "{} conv layers, topology has {}",
                self.conv.len(),
                topology.layers()
            )));
        }
        for (i, w) in self.conv.iter().enumerate() {
            let cols = topology.patch() * topology.layer_inputs(i + 1);
            if w.shape() != (m, cols) {
                return Err(Error::Dimension(format!(
                    "W^{} is {:?}, expected ({m}, {cols})",
                    i + 1,
                    w.shape()
                )));
            }
        }
        if self.output.shape() != (m, topology.pixels()) {
            return Err(Error::Dimension(format!(
                "output layer is {:?}, expected ({m}, {})",
                self.output.shape(),
                topology.pixels()
            )));
        }
        Ok(())
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for w in self.conv.iter().chain(std::iter::once(&self.output)) {
            flat.extend_from_slice(w.as_slice());
        }
        flat
    }

    /// Inverse of [`CnnParams::flatten`] for the layer shapes of `self`.
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.param_count() {
            return Err(Error::Dimension(format!(
                "flat vector has {} entries, expected {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        let mut take = |w: &DMatrix<f64>| {
            let next = DMatrix::from_column_slice(w.nrows(), w.ncols(), &flat[offset..offset + w.len()]);
            offset += w.len();
            next
        };
        let conv = self.conv.iter().map(&mut take).collect();
        let output = take(&self.output);
        Ok(Self { conv, output })
    }

    /// `self - eta * grad` with `grad` in flattened layer order.
    pub fn step(&self, grad: &[f64], eta: f64) -> Self {
        debug_assert_eq!(grad.len(), self.param_count());
        let mut offset = 0;
        let mut apply = |w: &DMatrix<f64>| {
            let g = &grad[offset..offset + w.len()];
            offset += w.len();
            let mut next = w.clone();
            for (v, gv) in next.as_mut_slice().iter_mut().zip(g) {
                *v -= eta * gv;
            }
            next
        };
        let conv = self.conv.iter().map(&mut apply).collect();
        let output = apply(&self.output);
        Self { conv, output }
    }

    pub fn is_finite(&self) -> bool {
        self.conv
            .iter()
            .chain(std::iter::once(&self.output))
            .all(|w| w.iter().all(|v| v.is_finite()))
    }
}

/// Frobenius distance `||W^l - W^l_0||_F` for every layer, output layer last.
pub fn param_distance(params: &CnnParams, params0: &CnnParams) -> Result<Vec<f64>> {
    if params.conv.len() != params0.conv.len() {
        return Err(Error::Dimension("parameter sets have different depths".into()));
    }
    params
        .conv
        .iter()
        .zip(&params0.conv)
        .chain(std::iter::once((&params.output, &params0.output)))
        .map(|(a, b)| {
            if a.shape() != b.shape() {
                Err(Error::Dimension(format!(
                    "layer shapes differ: {:?} vs {:?}",
                    a.shape(),
                    b.shape()
                )))
            } else {
                Ok((a - b).norm())
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Activation, Spatial};

    fn topo(m: usize) -> NetTopology {
        NetTopology::new(2, m, 3, 1, Spatial::Line(5), Activation::Sigmoid).unwrap()
    }

    #[test]
    fn same_seed_same_weights() {
        let t = topo(4);
        assert_eq!(init_params(&t, 7), init_params(&t, 7));
        assert_ne!(init_params(&t, 7), init_params(&t, 8));
    }

    #[test]
    fn init_moments_match_the_target_distributions() {
        let m = 10_000;
        let t = NetTopology::new(1, m, 1, 1, Spatial::Line(1), Activation::Sigmoid).unwrap();
        let params = init_params(&t, 3);
        let moments = |w: &DMatrix<f64>| {
            let n = w.len() as f64;
            let mean = w.sum() / n;
            let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (mean, var)
        };
        let (mean, var) = moments(&params.conv()[0]);
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
        let (_, var_out) = moments(params.output());
        let target = 1.0 / m as f64;
        assert!((var_out - target).abs() / target < 0.2, "var_out {var_out}");
    }

    #[test]
    fn flatten_round_trips() {
        let t = topo(3);
        let params = init_params(&t, 1);
        let flat = params.flatten();
        assert_eq!(flat.len(), t.param_count());
        assert_eq!(params.with_flat(&flat).unwrap(), params);
    }

    #[test]
    fn distance_of_identical_params_is_zero() {
        let params = init_params(&topo(3), 5);
        assert_eq!(param_distance(&params, &params).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn single_perturbation_shows_in_first_layer_only() {
        let params0 = init_params(&topo(3), 5);
        let mut flat = params0.flatten();
        flat[4] += 1e-3;
        let params = params0.with_flat(&flat).unwrap();
        let dist = param_distance(&params, &params0).unwrap();
        assert!((dist[0] - 1e-3).abs() < 1e-15);
        assert_eq!(&dist[1..], &[0.0, 0.0]);
    }

    #[test]
    fn random_perturbation_matches_sum_of_squares() {
        let t = topo(4);
        let params0 = init_params(&t, 9);
        let params = init_params(&t, 10);
        let dist = param_distance(&params, &params0).unwrap();
        let (a, b) = (params.flatten(), params0.flatten());
        let mut offset = 0;
        for (l, w) in params0.conv().iter().chain(std::iter::once(params0.output())).enumerate() {
            let ss: f64 = (offset..offset + w.len()).map(|i| (a[i] - b[i]).powi(2)).sum();
            assert!((dist[l] - ss.sqrt()).abs() < 1e-12);
            offset += w.len();
        }
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let a = init_params(&topo(3), 1);
        let b = init_params(&topo(4), 1);
        assert!(param_distance(&a, &b).is_err());
    }
}
