use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ucb::{select_arm, UcbScore};

/// Largest diagonal jitter tried before a kernel system is declared singular.
const MAX_JITTER: f64 = 1e-2;

/// Kernel ridge UCB with `k(x, y) = exp(-gamma ||x - y||^2)` and a dictionary
/// that stops growing at `capacity` entries.
#[derive(Debug, Clone)]
pub struct KernelUcb {
    dictionary: Vec<Vec<f64>>,
    sq_norms: Vec<f64>,
    rewards: Vec<f64>,
    gamma: f64,
    lambda: f64,
    beta: f64,
    capacity: usize,
    /// `(K + lambda I)^{-1}` over the dictionary.
    kernel_inv: DMatrix<f64>,
    /// `(K + lambda I)^{-1} r`.
    weights: DVector<f64>,
}

impl KernelUcb {
    pub fn new(gamma: f64, lambda: f64, beta: f64, capacity: usize) -> Result<Self> {
        for (name, v) in [("gamma", gamma), ("lambda", lambda)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be positive")));
            }
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta = {beta} must be non-negative")));
        }
        Ok(Self {
            dictionary: Vec::new(),
            sq_norms: Vec::new(),
            rewards: Vec::new(),
            gamma,
            lambda,
            beta,
            capacity,
            kernel_inv: DMatrix::zeros(0, 0),
            weights: DVector::zeros(0),
        })
    }

    /// `1 / median ||x_i - x_j||^2` over distinct pairs, or `None` when every
    /// pair coincides.
    pub fn median_gamma(contexts: &[&[f64]]) -> Option<f64> {
        let mut d2 = Vec::new();
        for i in 0..contexts.len() {
            for j in 0..i {
                d2.push(sq_dist(contexts[i], contexts[j]));
            }
        }
        d2.retain(|v| *v > 0.0);
        if d2.is_empty() {
            return None;
        }
        d2.sort_by(f64::total_cmp);
        let n = d2.len();
        let median = if n % 2 == 1 {
            d2[n / 2]
        } else {
            0.5 * (d2[n / 2 - 1] + d2[n / 2])
        };
        Some(1.0 / median)
    }

    pub fn dictionary_len(&self) -> usize {
        self.dictionary.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn kernel(&self, x: &[f64], y: &[f64]) -> f64 {
        (-self.gamma * sq_dist(x, y)).exp()
    }

    /// Kernel values against the dictionary, exploiting sparse queries.
    fn kernel_row(&self, x: &[f64]) -> DVector<f64> {
        let nz: Vec<usize> = (0..x.len()).filter(|&i| x[i] != 0.0).collect();
        let xx: f64 = nz.iter().map(|&i| x[i] * x[i]).sum();
        DVector::from_iterator(
            self.dictionary.len(),
            self.dictionary.iter().zip(&self.sq_norms).map(|(y, yy)| {
                let xy: f64 = nz.iter().map(|&i| x[i] * y[i]).sum();
                (-self.gamma * (xx + yy - 2.0 * xy).max(0.0)).exp()
            }),
        )
    }

    /// Posterior mean `k_x^T (K + lambda I)^{-1} r` and width
    /// `sqrt(max(0, k(x,x) - k_x^T (K + lambda I)^{-1} k_x) / lambda)`.
    pub fn score(&self, x: &[f64]) -> UcbScore {
        let (mean, var) = self.posterior(x);
        let width = (var.max(0.0) / self.lambda).sqrt();
        let total = mean + self.beta * width;
        UcbScore {
            mean,
            width,
            psi1: self.beta,
            psi2: 0.0,
            psi3: 0.0,
            index: total,
            total,
        }
    }

    /// Mean and the unclamped variance term `k(x,x) - k_x^T (K + lambda I)^{-1} k_x`.
    pub fn posterior(&self, x: &[f64]) -> (f64, f64) {
        if self.dictionary.is_empty() {
            return (0.0, 1.0);
        }
        let kx = self.kernel_row(x);
        let mean = kx.dot(&self.weights);
        let var = 1.0 - kx.dot(&(&self.kernel_inv * &kx));
        (mean, var)
    }

    pub fn select(&self, contexts: &[&[f64]]) -> Result<usize> {
        let scores: Vec<UcbScore> = contexts.iter().map(|x| self.score(x)).collect();
        select_arm(&scores)
    }

    /// Adds `(x, r)` to the dictionary unless it is full; a full dictionary
    /// ignores further observations.
    pub fn update(&mut self, x: &[f64], reward: f64) -> Result<()> {
        if x.iter().any(|v| !v.is_finite()) || !reward.is_finite() {
            return Err(Error::NonFinite);
        }
        if self.dictionary.len() >= self.capacity {
            return Ok(());
        }
        let kx = self.kernel_row(x);
        let n = self.dictionary.len();
        // block inverse of [[K + lambda I, k], [k^T, 1 + lambda]]
        let v = &self.kernel_inv * &kx;
        let schur = 1.0 + self.lambda - kx.dot(&v);
        self.dictionary.push(x.to_vec());
        self.sq_norms.push(x.iter().map(|a| a * a).sum());
        self.rewards.push(reward);
        if schur > 1e-12 * (1.0 + self.lambda) {
            let mut next = DMatrix::zeros(n + 1, n + 1);
            let s = 1.0 / schur;
            next.view_mut((0, 0), (n, n))
                .copy_from(&(&self.kernel_inv + &v * v.transpose() * s));
            for i in 0..n {
                next[(i, n)] = -v[i] * s;
                next[(n, i)] = -v[i] * s;
            }
            next[(n, n)] = s;
            self.kernel_inv = next;
        } else {
            self.rebuild()?;
        }
        self.weights = &self.kernel_inv * DVector::from_column_slice(&self.rewards);
        Ok(())
    }

    /// Refactorises `K + lambda I` from scratch, escalating diagonal jitter
    /// until a Cholesky factor exists.
    fn rebuild(&mut self) -> Result<()> {
        let n = self.dictionary.len();
        let k = DMatrix::from_fn(n, n, |i, j| self.kernel(&self.dictionary[i], &self.dictionary[j]));
        let mut jitter = 0.0;
        loop {
            let mut a = k.clone();
            for i in 0..n {
                a[(i, i)] += self.lambda + jitter;
            }
            if let Some(chol) = Cholesky::new(a) {
                self.kernel_inv = chol.inverse();
                return Ok(());
            }
            jitter = if jitter == 0.0 { 1e-10 } else { jitter * 10.0 };
            if jitter > MAX_JITTER {
                return Err(Error::KernelSingular { jitter: jitter / 10.0 });
            }
        }
    }
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}
