use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Inverse {
    /// Exact `A^{-1}`, kept symmetric.
    Full(DMatrix<f64>),
    /// Diagonal of `A` only; `A^{-1}` is approximated by its reciprocal.
    Diagonal(Vec<f64>),
}

/// Regularised design matrix `A_t = lambda I + sum u u^T` held through its
/// inverse, together with `b_t = sum r u` and `log det(A_t) - d log(lambda)`.
///
/// Feature vectors are gradients scaled as `u = g / sqrt(m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionState {
    lambda: f64,
    d: usize,
    inverse: Inverse,
    b: Vec<f64>,
    theta_hat: Vec<f64>,
    logdet_ratio: f64,
    t: usize,
}

/// Sparse-path threshold: vectors with at most `d / SPARSE_RATIO` non-zeros
/// only touch the matching rows/columns.
const SPARSE_RATIO: usize = 4;

impl PrecisionState {
    /// `A_0 = lambda I` with the exact inverse.
    pub fn new(lambda: f64, d: usize) -> Result<Self> {
        Self::check_args(lambda, d)?;
        Ok(Self::with_inverse(
            lambda,
            d,
            Inverse::Full(DMatrix::from_diagonal_element(d, d, 1.0 / lambda)),
        ))
    }

    /// `A_0 = lambda I` tracking only the diagonal of `A`.
    pub fn new_diagonal(lambda: f64, d: usize) -> Result<Self> {
        Self::check_args(lambda, d)?;
        Ok(Self::with_inverse(lambda, d, Inverse::Diagonal(vec![lambda; d])))
    }

    fn check_args(lambda: f64, d: usize) -> Result<()> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda = {lambda} must be positive")));
        }
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        Ok(())
    }

    fn with_inverse(lambda: f64, d: usize, inverse: Inverse) -> Self {
        Self {
            lambda,
            d,
            inverse,
            b: vec![0.0; d],
            theta_hat: vec![0.0; d],
            logdet_ratio: 0.0,
            t: 0,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn rounds(&self) -> usize {
        self.t
    }

    pub fn logdet_ratio(&self) -> f64 {
        self.logdet_ratio
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self.inverse, Inverse::Diagonal(_))
    }

    /// The exact inverse, when it is tracked.
    pub fn a_inv(&self) -> Option<&DMatrix<f64>> {
        match &self.inverse {
            Inverse::Full(m) => Some(m),
            Inverse::Diagonal(_) => None,
        }
    }

    /// Absorbs one observation with gradient `g` of a width-`m` model.
    pub fn update(&mut self, g: &[f64], m: usize, reward: f64) -> Result<()> {
        let u = self.scaled(g, m)?;
        self.update_feature(&u, reward)
    }

    /// Absorbs one observation with an already-scaled feature vector.
    pub fn update_feature(&mut self, u: &[f64], reward: f64) -> Result<()> {
        if u.len() != self.d {
            return Err(Error::Dimension(format!(
                "feature has {} entries, state dimension is {}",
                u.len(),
                self.d
            )));
        }
        if u.iter().any(|v| !v.is_finite()) || !reward.is_finite() {
            return Err(Error::NonFinite);
        }
        match &mut self.inverse {
            Inverse::Full(a_inv) => {
                let v = mat_vec(a_inv, u);
                let quad: f64 = dot_sparse_aware(u, &v);
                let denom = 1.0 + quad;
                // theta_hat' = A'^{-1}(b + r u) with A'^{-1} = A^{-1} - v v^T / denom
                let vb = dot_sparse_aware(&v, &self.b);
                let coef = reward - (vb + reward * quad) / denom;
                for (th, vi) in self.theta_hat.iter_mut().zip(&v) {
                    *th += coef * vi;
                }
                // Column-wise rank-one downdate. Entry (i, j) and (j, i) are both
                // computed as a - (v_i * v_j) * s, so exact symmetry is kept.
                let s = 1.0 / denom;
                let d = self.d;
                let data = a_inv.as_mut_slice();
                for j in 0..d {
                    let vj = v[j];
                    if vj == 0.0 {
                        continue;
                    }
                    let col = &mut data[j * d..(j + 1) * d];
                    for (a, vi) in col.iter_mut().zip(&v) {
                        *a -= (vi * vj) * s;
                    }
                }
                self.logdet_ratio += quad.ln_1p();
            }
            Inverse::Diagonal(diag) => {
                let mut inc = 0.0;
                for ((a, ui), (bi, th)) in diag
                    .iter_mut()
                    .zip(u)
                    .zip(self.b.iter().zip(self.theta_hat.iter_mut()))
                {
                    if *ui != 0.0 {
                        let sq = ui * ui;
                        inc += (sq / *a).ln_1p();
                        *a += sq;
                        *th = (bi + reward * ui) / *a;
                    }
                }
                self.logdet_ratio += inc;
            }
        }
        for (bi, ui) in self.b.iter_mut().zip(u) {
            *bi += reward * ui;
        }
        self.t += 1;
        Ok(())
    }

    fn scaled(&self, g: &[f64], m: usize) -> Result<Vec<f64>> {
        if g.len() != self.d {
            return Err(Error::Dimension(format!(
                "gradient has {} entries, state dimension is {}",
                g.len(),
                self.d
            )));
        }
        let s = 1.0 / (m as f64).sqrt();
        let u: Vec<f64> = g.iter().map(|v| v * s).collect();
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(u)
    }

    /// `u^T A^{-1} u`.
    pub fn quad_form(&self, u: &[f64]) -> f64 {
        match &self.inverse {
            Inverse::Full(a_inv) => {
                let nz = nonzeros(u);
                match nz {
                    Some(idx) => {
                        let d = self.d;
                        let data = a_inv.as_slice();
                        idx.iter()
                            .map(|&j| {
                                let col = &data[j * d..(j + 1) * d];
                                u[j] * idx.iter().map(|&i| col[i] * u[i]).sum::<f64>()
                            })
                            .sum()
                    }
                    None => dot(u, &mat_vec(a_inv, u)),
                }
            }
            Inverse::Diagonal(diag) => u.iter().zip(diag).map(|(ui, a)| ui * ui / a).sum(),
        }
    }

    /// Exploration width `||g / sqrt(m)||_{A^{-1}}`.
    pub fn width(&self, g: &[f64], m: usize) -> Result<f64> {
        let u = self.scaled(g, m)?;
        Ok(self.quad_form(&u).max(0.0).sqrt())
    }

    /// Widths of several gradients at once. Dense gradients share a single
    /// pass over the inverse, which dominates the cost at large `d`.
    pub fn widths(&self, gs: &[Vec<f64>], m: usize) -> Result<Vec<f64>> {
        let us = gs.iter().map(|g| self.scaled(g, m)).collect::<Result<Vec<_>>>()?;
        let a_inv = match &self.inverse {
            Inverse::Full(a) => a,
            Inverse::Diagonal(_) => return Ok(us.iter().map(|u| self.quad_form(u).max(0.0).sqrt()).collect()),
        };
        let mut out = vec![0.0; us.len()];
        let dense: Vec<usize> = (0..us.len()).filter(|&i| nonzeros(&us[i]).is_none()).collect();
        for (i, u) in us.iter().enumerate() {
            if !dense.contains(&i) {
                out[i] = self.quad_form(u).max(0.0).sqrt();
            }
        }
        if !dense.is_empty() {
            let u = DMatrix::from_fn(self.d, dense.len(), |r, c| us[dense[c]][r]);
            let v = a_inv * &u;
            for (c, &i) in dense.iter().enumerate() {
                out[i] = u.column(c).dot(&v.column(c)).max(0.0).sqrt();
            }
        }
        Ok(out)
    }

    /// Ridge estimate `A^{-1} b`, multiplied out from the stored inverse.
    pub fn ridge_theta_hat(&self) -> Vec<f64> {
        match &self.inverse {
            Inverse::Full(a_inv) => mat_vec(a_inv, &self.b),
            Inverse::Diagonal(diag) => self.b.iter().zip(diag).map(|(b, a)| b / a).collect(),
        }
    }

    /// Ridge estimate maintained incrementally alongside the inverse.
    pub fn theta_hat(&self) -> &[f64] {
        &self.theta_hat
    }
}

fn nonzeros(u: &[f64]) -> Option<Vec<usize>> {
    let count = u.iter().filter(|v| **v != 0.0).count();
    if count * SPARSE_RATIO > u.len() {
        return None;
    }
    Some(u.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect())
}

fn mat_vec(a: &DMatrix<f64>, u: &[f64]) -> Vec<f64> {
    match nonzeros(u) {
        Some(idx) => {
            let d = a.nrows();
            let data = a.as_slice();
            let mut out = vec![0.0; d];
            for j in idx {
                let uj = u[j];
                for (o, aij) in out.iter_mut().zip(&data[j * d..(j + 1) * d]) {
                    *o += aij * uj;
                }
            }
            out
        }
        None => (a * DVector::from_column_slice(u)).data.into(),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dot_sparse_aware(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).filter(|(x, _)| **x != 0.0).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| rng.random::<f64>() - 0.5).collect()
    }

    #[test]
    fn batched_widths_match_single_widths() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = 40;
        for diag in [false, true] {
            let mut s = if diag {
                PrecisionState::new_diagonal(1.0, d).unwrap()
            } else {
                PrecisionState::new(1.0, d).unwrap()
            };
            for _ in 0..15 {
                s.update(&random_vec(&mut rng, d), 4, 0.5).unwrap();
            }
            let mut gs: Vec<Vec<f64>> = (0..3).map(|_| random_vec(&mut rng, d)).collect();
            let mut sparse = vec![0.0; d];
            sparse[3] = 1.0;
            sparse[17] = -2.0;
            gs.push(sparse);
            let batch = s.widths(&gs, 4).unwrap();
            for (g, w) in gs.iter().zip(&batch) {
                assert!((s.width(g, 4).unwrap() - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fresh_state_is_scaled_identity() {
        let s = PrecisionState::new(1.0, 3).unwrap();
        assert_eq!(s.a_inv().unwrap(), &DMatrix::identity(3, 3));
        assert_eq!(s.logdet_ratio(), 0.0);
        let s = PrecisionState::new(2.0, 2).unwrap();
        assert_eq!(s.a_inv().unwrap(), &(DMatrix::identity(2, 2) * 0.5));
        assert!(PrecisionState::new(0.0, 2).is_err());
        assert!(PrecisionState::new(1.0, 0).is_err());
    }

    #[test]
    fn first_update_matches_rank_one_closed_form() {
        let lambda = 1.5;
        let u = [0.3, -0.2, 0.9];
        let mut s = PrecisionState::new(lambda, 3).unwrap();
        s.update_feature(&u, 0.7).unwrap();
        let uu = DVector::from_column_slice(&u);
        let expected =
            (DMatrix::identity(3, 3) - &uu * uu.transpose() / (lambda + uu.norm_squared())) / lambda;
        assert!((s.a_inv().unwrap() - expected).amax() < 1e-15);
        let theta = s.ridge_theta_hat();
        for (t, ui) in theta.iter().zip(&u) {
            assert!((t - 0.7 * ui / (lambda + uu.norm_squared())).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_is_scaled_by_root_width() {
        let g = [2.0, 0.0, 4.0];
        let mut a = PrecisionState::new(1.0, 3).unwrap();
        let mut b = PrecisionState::new(1.0, 3).unwrap();
        a.update(&g, 4, 1.0).unwrap();
        b.update_feature(&[1.0, 0.0, 2.0], 1.0).unwrap();
        assert_eq!(a, b);
        let fresh = PrecisionState::new(1.0, 3).unwrap();
        assert!((fresh.width(&g, 4).unwrap() - 5.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn logdet_matches_dense_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lambda = 0.7;
        let mut s = PrecisionState::new(lambda, 3).unwrap();
        let mut a = DMatrix::identity(3, 3) * lambda;
        for _ in 0..5 {
            let u = random_vec(&mut rng, 3);
            s.update_feature(&u, rng.random()).unwrap();
            let uu = DVector::from_column_slice(&u);
            a += &uu * uu.transpose();
        }
        let direct = a.determinant().ln() - 3.0 * lambda.ln();
        assert!((s.logdet_ratio() - direct).abs() < 1e-6);
    }

    #[test]
    fn sparse_updates_match_direct_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = 40;
        let mut s = PrecisionState::new(1.0, d).unwrap();
        let mut a = DMatrix::<f64>::identity(d, d);
        for step in 0..30 {
            let mut u = vec![0.0; d];
            let block = step % 4;
            for x in &mut u[block * 10..block * 10 + 5] {
                *x = rng.random::<f64>() - 0.5;
            }
            let direct_inv = a.clone().try_inverse().unwrap();
            let uu = DVector::from_column_slice(&u);
            let expected = (uu.transpose() * &direct_inv * &uu)[(0, 0)];
            assert!((s.quad_form(&u) - expected).abs() < 1e-12);
            s.update_feature(&u, 0.5).unwrap();
            a += &uu * uu.transpose();
        }
        let direct_inv = a.try_inverse().unwrap();
        assert!((s.a_inv().unwrap() - direct_inv).amax() < 1e-12);
    }

    #[test]
    fn diagonal_mode_tracks_diagonal_of_a() {
        let mut s = PrecisionState::new_diagonal(1.0, 2).unwrap();
        s.update_feature(&[1.0, 2.0], 1.0).unwrap();
        assert!((s.logdet_ratio() - (2.0f64.ln() + 5.0f64.ln())).abs() < 1e-14);
        assert!((s.quad_form(&[1.0, 1.0]) - (0.5 + 0.2)).abs() < 1e-15);
        assert_eq!(s.ridge_theta_hat(), vec![0.5, 0.4]);
        assert_eq!(s.theta_hat(), &[0.5, 0.4]);
    }

    #[test]
    fn incremental_ridge_matches_multiplied_out() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = PrecisionState::new(1.0, 12).unwrap();
        for _ in 0..25 {
            let u = random_vec(&mut rng, 12);
            s.update_feature(&u, rng.random()).unwrap();
        }
        for (a, b) in s.theta_hat().iter().zip(s.ridge_theta_hat()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut s = PrecisionState::new(1.0, 2).unwrap();
        assert!(matches!(s.update_feature(&[1.0], 0.0), Err(Error::Dimension(_))));
        assert!(matches!(s.update_feature(&[f64::NAN, 0.0], 0.0), Err(Error::NonFinite)));
        assert_eq!(s.rounds(), 0);
    }
}
