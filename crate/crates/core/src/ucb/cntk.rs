//! Kernel view of the network at initialisation: inner products of
//! initial-parameter gradients, the linearised predictor and the effective
//! dimension of a Gram matrix.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::NeuralModel;
use crate::net::{network_gradient, ArmContext, CnnParams, NetTopology};

/// Slack allowed below zero in a Gram spectrum before it is rejected.
const PSD_JITTER: f64 = 1e-8;

/// `<g(x1; theta_0), g(x2; theta_0)>`.
pub fn cntk_kernel(
    x1: &ArmContext,
    x2: &ArmContext,
    params0: &CnnParams,
    topology: &NetTopology,
) -> Result<f64> {
    let g1 = network_gradient(x1, params0, topology)?;
    let g2 = network_gradient(x2, params0, topology)?;
    Ok(g1.flat.iter().zip(&g2.flat).map(|(a, b)| a * b).sum())
}

/// `<g(x; theta_0), theta - theta_0>`.
pub fn cntk_predict(
    x: &ArmContext,
    params: &CnnParams,
    params0: &CnnParams,
    topology: &NetTopology,
) -> Result<f64> {
    params.check(topology)?;
    let g = network_gradient(x, params0, topology)?;
    let theta = params.flatten();
    let theta0 = params0.flatten();
    Ok(g.flat
        .iter()
        .zip(theta.iter().zip(&theta0))
        .map(|(gi, (a, b))| gi * (a - b))
        .sum())
}

/// Columns `g(x_i; params) / sqrt(m)` of a model, one per arm.
pub fn scaled_gradients<M: NeuralModel>(
    model: &M,
    arms: &[ArmContext],
    params: &M::Params,
) -> Result<Vec<Vec<f64>>> {
    let s = 1.0 / (model.width() as f64).sqrt();
    arms.iter()
        .map(|x| {
            let (_, g) = model.value_and_gradient(x, params)?;
            Ok(g.into_iter().map(|v| v * s).collect())
        })
        .collect()
}

/// `K_ij = <u_i, u_j>` for the given columns.
pub fn gram(columns: &[Vec<f64>]) -> DMatrix<f64> {
    let t = columns.len();
    let mut k = DMatrix::zeros(t, t);
    for i in 0..t {
        for j in 0..=i {
            let v: f64 = columns[i].iter().zip(&columns[j]).map(|(a, b)| a * b).sum();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// `log det(I + K / lambda) / log(1 + T / lambda)` with `T = K.nrows()`,
/// evaluated through a Cholesky factor.
pub fn effective_dimension_from_gram(k: &DMatrix<f64>, lambda: f64) -> Result<f64> {
    let t = k.nrows();
    if t == 0 || k.ncols() != t {
        return Err(Error::Dimension(format!("Gram matrix is {}x{}", k.nrows(), k.ncols())));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda = {lambda} must be positive")));
    }
    check_psd(k)?;
    let denominator = (t as f64 / lambda).ln_1p();
    if t == 1 {
        // the factor of a 1x1 matrix is its square root; skip the round trip
        return Ok((k[(0, 0)] / lambda).ln_1p() / denominator);
    }
    let mut m = k / lambda;
    for i in 0..t {
        m[(i, i)] += 1.0;
    }
    let chol = Cholesky::new(m).ok_or(Error::NotPositiveSemiDefinite {
        min_eigenvalue: f64::NAN,
    })?;
    let logdet: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(logdet / denominator)
}

/// Rejects a Gram matrix whose spectrum dips below `-PSD_JITTER` (relative to
/// its scale): `K + jitter I` must admit a Cholesky factor.
fn check_psd(k: &DMatrix<f64>) -> Result<()> {
    let scale = k.diagonal().amax().max(1.0);
    let mut shifted = k.clone();
    for i in 0..k.nrows() {
        shifted[(i, i)] += PSD_JITTER * scale;
    }
    if Cholesky::new(shifted).is_some() {
        return Ok(());
    }
    let min_eigenvalue = k
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    Err(Error::NotPositiveSemiDefinite { min_eigenvalue })
}

/// Effective dimension of the initial-gradient Gram over `arms`.
pub fn effective_dimension<M: NeuralModel>(
    model: &M,
    arms: &[ArmContext],
    params0: &M::Params,
    lambda: f64,
) -> Result<f64> {
    if arms.is_empty() {
        return Err(Error::EmptyArms);
    }
    let cols = scaled_gradients(model, arms, params0)?;
    effective_dimension_from_gram(&gram(&cols), lambda)
}

/// Ridge solution `(lambda I + U U^T)^{-1} U r` for feature columns `U`,
/// computed in the `t`-dimensional dual as `U (lambda I + U^T U)^{-1} r`.
pub fn dual_ridge(columns: &[Vec<f64>], rewards: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if columns.len() != rewards.len() {
        return Err(Error::Dimension(format!(
            "{} feature columns but {} rewards",
            columns.len(),
            rewards.len()
        )));
    }
    let Some(first) = columns.first() else {
        return Err(Error::EmptyHistory);
    };
    let d = first.len();
    let mut k = gram(columns);
    for i in 0..k.nrows() {
        k[(i, i)] += lambda;
    }
    let chol = Cholesky::new(k).ok_or(Error::NotPositiveSemiDefinite {
        min_eigenvalue: f64::NAN,
    })?;
    let alpha = chol.solve(&DVector::from_column_slice(rewards));
    let mut theta = vec![0.0; d];
    for (col, a) in columns.iter().zip(alpha.iter()) {
        for (t, c) in theta.iter_mut().zip(col) {
            *t += a * c;
        }
    }
    Ok(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{init_params, Activation, Spatial};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small() -> (NetTopology, CnnParams) {
        let t = NetTopology::new(2, 3, 3, 1, Spatial::Line(6), Activation::Sigmoid).unwrap();
        let p = init_params(&t, 17);
        (t, p)
    }

    fn unit_arm(rng: &mut ChaCha8Rng, n: usize) -> ArmContext {
        let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let s = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        ArmContext::from_vector(&v.iter().map(|a| a / s).collect::<Vec<_>>())
    }

    #[test]
    fn kernel_is_symmetric_and_diagonal_is_squared_norm() {
        let (t, p) = small();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (a, b) = (unit_arm(&mut rng, 6), unit_arm(&mut rng, 6));
        assert_eq!(cntk_kernel(&a, &b, &p, &t).unwrap(), cntk_kernel(&b, &a, &p, &t).unwrap());
        let g = network_gradient(&a, &p, &t).unwrap();
        let kaa = cntk_kernel(&a, &a, &p, &t).unwrap();
        assert!((kaa - g.norm().powi(2)).abs() < 1e-12 * kaa.max(1.0));
        assert!(kaa >= 0.0);
    }

    #[test]
    fn predictor_is_zero_at_init_and_linear_along_gradient() {
        let (t, p) = small();
        let x = ArmContext::from_vector(&[0.1, 0.4, -0.2, 0.3, 0.0, 0.5]);
        assert_eq!(cntk_predict(&x, &p, &p, &t).unwrap(), 0.0);
        let g = network_gradient(&x, &p, &t).unwrap();
        let eps = 1e-3;
        let theta: Vec<f64> = p
            .flatten()
            .iter()
            .zip(&g.flat)
            .map(|(a, gi)| a + eps * gi / g.norm())
            .collect();
        let moved = p.with_flat(&theta).unwrap();
        let v = cntk_predict(&x, &moved, &p, &t).unwrap();
        assert!((v - eps * g.norm()).abs() < 1e-12);
    }

    #[test]
    fn zero_gradients_have_zero_dimension() {
        let k = DMatrix::zeros(4, 4);
        assert_eq!(effective_dimension_from_gram(&k, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn single_unit_column_has_unit_dimension() {
        let k = DMatrix::from_element(1, 1, 1.0);
        assert_eq!(effective_dimension_from_gram(&k, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn indefinite_gram_is_rejected() {
        let k = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(
            effective_dimension_from_gram(&k, 1.0),
            Err(Error::NotPositiveSemiDefinite { .. })
        ));
    }

    #[test]
    fn dual_ridge_matches_primal_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (d, t, lambda) = (9, 4, 0.5);
        let cols: Vec<Vec<f64>> = (0..t).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
        let r: Vec<f64> = (0..t).map(|_| rng.random()).collect();
        let theta = dual_ridge(&cols, &r, lambda).unwrap();
        let mut a = DMatrix::<f64>::identity(d, d) * lambda;
        let mut b = DVector::<f64>::zeros(d);
        for (c, ri) in cols.iter().zip(&r) {
            let u = DVector::from_column_slice(c);
            a += &u * u.transpose();
            b += &u * *ri;
        }
        let primal = a.lu().solve(&b).unwrap();
        for (x, y) in theta.iter().zip(primal.iter()) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}
