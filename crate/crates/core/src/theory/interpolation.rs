//! The parameter displacement that interpolates target values through the
//! initial gradients: `G^T (theta* - theta_0) = f*` with minimum norm.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::NeuralModel;
use crate::net::{ArmContext, NetTopology};

/// Singular values below this fraction of the largest make `G` rank deficient.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaStar {
    /// `theta* - theta_0 = U S^{-1} V^T f*` for `G = U S V^T`.
    pub displacement: Vec<f64>,
    /// `||G^T displacement - f*||_2`.
    pub residual: f64,
    /// `f*^T (G^T G)^{-1} f*`, solved through a Cholesky factor.
    pub norm_sq: f64,
    /// Smallest eigenvalue of `G^T G`.
    pub lambda_1: f64,
}

impl ThetaStar {
    pub fn displacement_norm_sq(&self) -> f64 {
        self.displacement.iter().map(|v| v * v).sum()
    }

    /// Norm bound `S = sqrt(m) ||theta* - theta_0||_2` for a width-`m` model.
    pub fn s_bar(&self, m: usize) -> f64 {
        (m as f64).sqrt() * self.displacement_norm_sq().sqrt()
    }
}

/// Works on explicit gradient columns `g_i` (each of length `d`, `t <= d`).
pub fn construct_from_gradients(columns: &[Vec<f64>], f_star: &[f64]) -> Result<ThetaStar> {
    let t = columns.len();
    if t == 0 || t != f_star.len() {
        return Err(Error::Dimension(format!("{t} gradient columns but {} targets", f_star.len())));
    }
    let d = columns[0].len();
    if columns.iter().any(|c| c.len() != d) {
        return Err(Error::Dimension("gradient columns differ in length".into()));
    }
    if t > d {
        return Err(Error::Dimension(format!("{t} columns exceed dimension {d}")));
    }
    let g = DMatrix::from_fn(d, t, |i, j| columns[j][i]);
    let f = DVector::from_column_slice(f_star);

    let svd = g.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    if !(s_max > 0.0) || s_min < RANK_TOL * s_max {
        return Err(Error::RankDeficient {
            ratio: if s_max > 0.0 { s_min / s_max } else { 0.0 },
        });
    }
    let u = svd.u.as_ref().expect("left vectors requested");
    let v_t = svd.v_t.as_ref().expect("right vectors requested");
    let mut coeff = v_t * &f;
    for (c, s) in coeff.iter_mut().zip(svd.singular_values.iter()) {
        *c /= s;
    }
    let displacement = u * coeff;
    let residual = (g.tr_mul(&displacement) - &f).norm();

    let gram = g.tr_mul(&g);
    let norm_sq = match Cholesky::new(gram.clone()) {
        Some(chol) => f.dot(&chol.solve(&f)),
        None => return Err(Error::RankDeficient { ratio: s_min / s_max }),
    };
    let lambda_1 = SymmetricEigen::new(gram).eigenvalues.min();
    Ok(ThetaStar {
        displacement: displacement.as_slice().to_vec(),
        residual,
        norm_sq,
        lambda_1,
    })
}

/// Stacks `g(x_i; theta_0)` for the given arms and interpolates `f_star`.
pub fn construct_theta_star<M: NeuralModel>(
    model: &M,
    arms: &[ArmContext],
    f_star: &[f64],
    params0: &M::Params,
) -> Result<ThetaStar> {
    let columns = arms
        .iter()
        .map(|x| model.value_and_gradient(x, params0).map(|(_, g)| g))
        .collect::<Result<Vec<_>>>()?;
    construct_from_gradients(&columns, f_star)
}

/// `t` Gaussian arms scaled to unit Frobenius norm and targets uniform on
/// `[0, 1)`, for checking the construction on random instances.
pub fn random_instance(topology: &NetTopology, t: usize, seed: u64) -> Result<(Vec<ArmContext>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c, p) = (topology.in_channels(), topology.pixels());
    let arms = (0..t)
        .map(|_| {
            let x = DMatrix::from_fn(c, p, |_, _| rng.sample::<f64, _>(StandardNormal));
            let n = x.norm();
            ArmContext::new(x / n, topology.spatial())
        })
        .collect::<Result<Vec<_>>>()?;
    let f_star = (0..t).map(|_| rng.random::<f64>()).collect();
    Ok((arms, f_star))
}
