//! Closed-form confidence and regret bound terms for the convolutional model.
//!
//! Every quantity is evaluated exactly as displayed in the analysis. The
//! asymptotic `O(.)`/`Omega(.)` wrappers in the width requirement are read as
//! the identity. None of this feeds arm selection except `psi2 + psi3` in the
//! theoretical exploration mode.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::cntk::effective_dimension_from_gram;
use crate::error::Result;

/// The architecture numbers the bounds depend on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryShape {
    /// `L`, the number of convolutional layers.
    pub layers: usize,
    /// `m`, channels per layer.
    pub width: usize,
    /// `q`, pixels per patch.
    pub patch: usize,
    /// `p`, pixel count.
    pub pixels: usize,
    /// `mu`, Lipschitz-smoothness constant of the activation.
    pub mu: f64,
}

/// Unspecified constants `C0 > 0` and `1 < C1, C2 < 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for TheoryConstants {
    fn default() -> Self {
        Self {
            c0: 1.0,
            c1: 1.5,
            c2: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub w: f64,
    pub psi_lk: f64,
    pub a_bar_1: f64,
    pub a_bar_2: f64,
    pub a_bar_3: f64,
    pub psi2: f64,
    pub psi3: f64,
    /// Width lower bound of the over-parameterisation condition.
    pub m_required: f64,
    /// Learning-rate upper bound `1 / (m lambda + 1)`.
    pub eta_max: f64,
    /// Smallest eigenvalue of `G^T G` for unscaled gradients, given a Gram.
    pub lambda_1: Option<f64>,
    /// Gram-drift bound `Psi_G' / m`.
    pub gram_drift: f64,
    pub d_bar: Option<f64>,
    pub regret_bound: Option<f64>,
}

impl BoundReport {
    /// `(label, value)` pairs in a fixed order, for printing.
    pub fn fields(&self) -> Vec<(&'static str, Option<f64>)> {
        vec![
            ("w", Some(self.w)),
            ("psi_lk", Some(self.psi_lk)),
            ("a_bar_1", Some(self.a_bar_1)),
            ("a_bar_2", Some(self.a_bar_2)),
            ("a_bar_3", Some(self.a_bar_3)),
            ("psi2", Some(self.psi2)),
            ("psi3", Some(self.psi3)),
            ("m_required", Some(self.m_required)),
            ("eta_max", Some(self.eta_max)),
            ("lambda_1", self.lambda_1),
            ("gram_drift", Some(self.gram_drift)),
            ("d_bar", self.d_bar),
            ("regret_bound", self.regret_bound),
        ]
    }
}

/// Recurring sub-expressions of the bounds for one `(shape, t)`.
#[derive(Debug, Clone, Copy)]
struct Terms {
    l: f64,
    m: f64,
    q: f64,
    p: f64,
    mu: f64,
    c: TheoryConstants,
    /// `(C1 mu)^L`
    cm: f64,
    w: f64,
    psi_lk: f64,
}

impl Terms {
    fn new(shape: &TheoryShape, c: TheoryConstants, t: f64) -> Self {
        let l = shape.layers as f64;
        let m = shape.width as f64;
        let q = shape.patch as f64;
        let p = shape.pixels as f64;
        let mu = shape.mu;
        let cm = (c.c1 * mu).powf(l);
        let w = 2.0 * t * 2f64.sqrt() * mu.powf(l) * (c.c1 * (l - 1.0) * q.sqrt() + c.c2).exp() * (cm + 1.0)
            / c.c0;
        let r = 2.0 * mu * c.c1 * q.sqrt();
        // geometric sum (r^L - 1) / (r - 1), equal to L at r = 1
        let geom = if (r - 1.0).abs() < 1e-12 {
            l
        } else {
            (r.powf(l) - 1.0) / (r - 1.0)
        };
        let psi_lk = mu * w * geom / m;
        Self {
            l,
            m,
            q,
            p,
            mu,
            c,
            cm,
            w,
            psi_lk,
        }
    }

    /// `sqrt(p) (C1 mu sqrt(q))^L / m`
    fn init_grad(&self) -> f64 {
        self.p.sqrt() * (self.c.c1 * self.mu * self.q.sqrt()).powf(self.l) / self.m
    }

    /// `sqrt(q) Psi_{L,(k')} ((C1 mu)^L + 2)`
    fn grad_shift(&self) -> f64 {
        self.q.sqrt() * self.psi_lk * (self.cm + 2.0)
    }

    /// Gradient-drift bound `sqrt(q (L+1)) Psi_{L,(k')} ((C1 mu)^L + 2)`.
    fn grad_drift(&self) -> f64 {
        (self.q * (self.l + 1.0)).sqrt() * self.psi_lk * (self.cm + 2.0)
    }

    /// Kernel-drift bound for a horizon of one:
    /// `(L+1) (2 sqrt(p)(C1 mu sqrt(q))^L/m + sqrt(q) Psi (cm + 2)) sqrt(q) Psi (cm + 2)`.
    fn kernel_drift(&self) -> f64 {
        (self.l + 1.0) * (2.0 * self.init_grad() + self.grad_shift()) * self.grad_shift()
    }

    /// `Psi (C2 + 1) + (C1 mu)^L C2 + sqrt(q) w ((L-1)(C1 mu)^L + 1)`
    fn linearization_numerator(&self) -> f64 {
        self.psi_lk * (self.c.c2 + 1.0)
            + self.cm * self.c.c2
            + self.q.sqrt() * self.w * ((self.l - 1.0) * self.cm + 1.0)
    }

    fn a_bars(&self, t: f64, lambda: f64) -> (f64, f64, f64) {
        let a1 = t * (2.0 * self.q * (self.l + 1.0)).sqrt() * self.psi_lk * (self.cm + 2.0);
        let a2 = t
            * (self.l + 1.0).sqrt()
            * self.p.sqrt()
            * (self.c.c1 * self.mu * self.q.sqrt()).powf(self.l)
            * t.sqrt()
            * self.linearization_numerator()
            * self.m.powf(-1.5);
        let a3 = lambda * (self.l + 1.0).sqrt() * self.w / self.m.sqrt();
        (a1, a2, a3)
    }

    /// Ridge-distance bound: `(A1 + A2 + A3)/(m lambda) + sqrt(t/(m lambda))
    /// + t (L+1)/m (2 init + shift) shift`.
    fn ridge_distance(&self, t: f64, lambda: f64) -> f64 {
        let (a1, a2, a3) = self.a_bars(t, lambda);
        (a1 + a2 + a3) / (self.m * lambda)
            + (t / (self.m * lambda)).sqrt()
            + t * (self.l + 1.0) / self.m * (2.0 * self.init_grad() + self.grad_shift()) * self.grad_shift()
    }

    fn psi2(&self, t: f64, lambda: f64) -> f64 {
        (self.l + 1.0).sqrt() * (self.init_grad() + self.grad_shift()) * self.ridge_distance(t, lambda)
    }

    fn psi3(&self) -> f64 {
        (self.c.c2 * (self.psi_lk + self.cm)
            + self.q.sqrt()
                * (1.0 + self.psi_lk)
                * self.w
                * ((self.l - 1.0) * (self.psi_lk + self.cm) + 1.0))
            / self.m.sqrt()
    }
}

/// `Psi_2` and `Psi_3` after `t` observations.
pub fn psi2_psi3(shape: &TheoryShape, constants: TheoryConstants, t: usize, lambda: f64) -> (f64, f64) {
    let terms = Terms::new(shape, constants, t as f64);
    (terms.psi2(t as f64, lambda), terms.psi3())
}

/// Regret right-hand side
/// `2 sqrt(2 T d log(1+T/lambda) + 1) (sqrt(d log(1+T/lambda) + 2 log(1/delta) + 1) + sqrt(lambda) S) + 2`.
pub fn regret_bound(d_bar: f64, horizon: usize, lambda: f64, delta: f64, s_bar: f64) -> f64 {
    let t = horizon as f64;
    let ld = d_bar * (1.0 + t / lambda).ln();
    2.0 * (2.0 * t * ld + 1.0).sqrt() * ((ld + 2.0 * (1.0 / delta).ln() + 1.0).sqrt() + lambda.sqrt() * s_bar)
        + 2.0
}

/// Inputs of [`theory_bounds`] beyond the architecture.
#[derive(Debug, Clone, Copy)]
pub struct BoundInputs {
    pub constants: TheoryConstants,
    pub delta: f64,
    pub s_bar: f64,
    pub lambda: f64,
    /// Observations absorbed so far.
    pub t: usize,
    /// Horizon `T`.
    pub horizon: usize,
}

/// Every bound term. `gram` is the `T x T` Gram of `g(x_i; theta_0)/sqrt(m)`;
/// without it the spectrum-dependent entries are `None`.
pub fn theory_bounds(
    shape: &TheoryShape,
    inputs: &BoundInputs,
    gram: Option<&DMatrix<f64>>,
) -> Result<BoundReport> {
    let BoundInputs {
        constants: c,
        delta,
        s_bar,
        lambda,
        t,
        horizon,
    } = *inputs;
    let terms = Terms::new(shape, c, t as f64);
    let (a_bar_1, a_bar_2, a_bar_3) = terms.a_bars(t as f64, lambda);
    let tf = t as f64;
    let m_required = (tf.powi(4) * terms.cm * (c.c1 * terms.l * terms.q.sqrt()).exp() * c.c2.exp()
        / (lambda * c.c0))
        .max((terms.l * tf / delta).ln().max(0.0));

    // The drift bounds are stated for the horizon T.
    let horizon_terms = Terms::new(shape, c, horizon as f64);
    let gram_drift = horizon as f64 * (horizon_terms.l + 1.0) / horizon_terms.m
        * (2.0 * horizon_terms.init_grad() + horizon_terms.grad_shift())
        * horizon_terms.grad_shift();

    let (lambda_1, d_bar, regret) = match gram {
        Some(k) => {
            let min_eig = SymmetricEigen::new(k.clone())
                .eigenvalues
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            let d_bar = effective_dimension_from_gram(k, lambda)?;
            (
                Some((terms.m * min_eig).max(0.0)),
                Some(d_bar),
                Some(regret_bound(d_bar, horizon, lambda, delta, s_bar)),
            )
        }
        None => (None, None, None),
    };

    Ok(BoundReport {
        w: terms.w,
        psi_lk: terms.psi_lk,
        a_bar_1,
        a_bar_2,
        a_bar_3,
        psi2: terms.psi2(tf, lambda),
        psi3: terms.psi3(),
        m_required,
        eta_max: 1.0 / (terms.m * lambda + 1.0),
        lambda_1,
        gram_drift,
        d_bar,
        regret_bound: regret,
    })
}

/// Bound values matching the finite-width drift measurements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftBounds {
    pub grad_drift: f64,
    pub kernel_drift: f64,
    pub linearization: f64,
    /// Bound on `sqrt(m) ||W^l - W^l_0||_F`, i.e. `w`.
    pub weight_drift: f64,
    pub ridge_distance: f64,
}

pub fn drift_bounds(shape: &TheoryShape, constants: TheoryConstants, t: usize, lambda: f64) -> DriftBounds {
    let terms = Terms::new(shape, constants, t as f64);
    DriftBounds {
        grad_drift: terms.grad_drift(),
        kernel_drift: terms.kernel_drift(),
        linearization: terms.linearization_numerator() / terms.m.sqrt(),
        weight_drift: terms.w,
        ridge_distance: terms.ridge_distance(t as f64, lambda),
    }
}
