//! Closed forms for the lossy, noisy two-mode squeezed state after the phase
//! gates: covariance matrix, the (q1, q2) homodyne quadratic form and the
//! difference-quadrature marginal.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::params::ModelParams;

/// 4x4 covariance in quadrature order (q1, p1, q2, p2), vacuum variance 1/2.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceMatrix {
    pub entries: [[f64; 4]; 4],
}

impl CovarianceMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i][j]
    }

    /// Smallest eigenvalue of the Hermitian matrix `Sigma + i Omega / 2`.
    ///
    /// Non-negative for every physical state.
    pub fn uncertainty_margin(&self) -> f64 {
        // real 8x8 embedding [[S, -W], [W, S]] of S + iW shares its spectrum
        let w = symplectic_form();
        let m = nalgebra::SMatrix::<f64, 8, 8>::from_fn(|i, j| {
            let (bi, bj) = (i / 4, j / 4);
            let (a, b) = (i % 4, j % 4);
            match (bi, bj) {
                (0, 0) | (1, 1) => self.entries[a][b],
                (0, 1) => -0.5 * w[a][b],
                _ => 0.5 * w[a][b],
            }
        });
        m.symmetric_eigenvalues().min()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..4).all(|i| (0..4).all(|j| (self.entries[i][j] - self.entries[j][i]).abs() <= tol))
    }
}

/// Symplectic form for ordering (q1, p1, q2, p2).
pub fn symplectic_form() -> [[f64; 4]; 4] {
    [
        [0.0, 1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0, 0.0],
    ]
}

/// The 2x2 matrix `A` and scalar `f = det A` of the (q1, q2) density
/// `P(x) = exp(-x^T A x / f) / (pi sqrt f)`.
///
/// `a[0][0]` carries the probe parameters, `a[1][1]` the conjugate ones.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticForm2 {
    pub a: [[f64; 2]; 2],
    pub f: f64,
}

impl QuadraticForm2 {
    pub fn trace(&self) -> f64 {
        self.a[0][0] + self.a[1][1]
    }

    pub fn a12(&self) -> f64 {
        self.a[0][1]
    }

    /// `trA + 2 A12`, four times the difference-quadrature variance.
    pub fn minus_weight(&self) -> f64 {
        self.trace() + 2.0 * self.a12()
    }

    /// `trA - 2 A12`.
    pub fn plus_weight(&self) -> f64 {
        self.trace() - 2.0 * self.a12()
    }

    /// `M^T A M` for `M = [[1, 1], [1, -1]] / sqrt 2`, the form in the
    /// (X+, X-) variables. Its determinant equals `f`.
    pub fn rotated(&self) -> [[f64; 2]; 2] {
        let off = 0.5 * (self.a[0][0] - self.a[1][1]);
        [
            [0.5 * self.minus_weight(), off],
            [off, 0.5 * self.plus_weight()],
        ]
    }
}

struct Coupling {
    a11: f64,
    a22: f64,
    c: f64,
}

fn coupling(p: &ModelParams) -> Coupling {
    let n = p.n();
    let excess = 1.0 + p.n_b + p.n_b_prime;
    Coupling {
        a11: 1.0 + 2.0 * p.epsilon_prime * (p.n_b_prime + excess * n),
        a22: 1.0 + 2.0 * p.epsilon * (p.n_b + excess * n),
        c: (p.epsilon * p.epsilon_prime).sqrt() * (n * (n + 1.0)).sqrt() * excess,
    }
}

/// Covariance matrix of the attenuated, phase-shifted two-mode squeezed state.
pub fn tmss_covariance(params: &ModelParams) -> Result<CovarianceMatrix> {
    params.validate()?;
    let k = coupling(params);
    let d = params.phi_c - params.phi_0;
    let (s, c) = d.sin_cos();
    let (v1, v2) = (0.5 * k.a22, 0.5 * k.a11);
    let (zc, xs) = (k.c * c, k.c * s);
    // X (x) Z and X (x) X in the off-diagonal blocks
    let entries = [
        [v1, 0.0, zc, xs],
        [0.0, v1, xs, -zc],
        [zc, xs, v2, 0.0],
        [xs, -zc, 0.0, v2],
    ];
    Ok(CovarianceMatrix { entries })
}

pub fn homodyne_quadratic_form(params: &ModelParams) -> Result<QuadraticForm2> {
    params.validate()?;
    let k = coupling(params);
    let a12 = -2.0 * k.c * (params.phi_c - params.phi_0).cos();
    let f = k.a11 * k.a22 - a12 * a12;
    Ok(QuadraticForm2 {
        a: [[k.a11, a12], [a12, k.a22]],
        f,
    })
}

/// Joint (q1, q2) homodyne density.
pub fn joint_q_density(x1: f64, x2: f64, params: &ModelParams) -> Result<f64> {
    let q = homodyne_quadratic_form(params)?;
    // covariance of (x1, x2) is adj(A) / 2, so Var(x1) carries a22
    let form = q.a[0][0] * x1 * x1 + 2.0 * q.a[0][1] * x1 * x2 + q.a[1][1] * x2 * x2;
    Ok((-form / q.f).exp() / (PI * q.f.sqrt()))
}

/// Density of `X- = (x1 - x2) / sqrt 2`.
///
/// Uses the exact Gaussian marginal `exp(-2 X^2 / (trA + 2 A12))`; it equals
/// the `(trA - 2 A12) / (2 f)` coefficient only when `a11 == a22`.
pub fn marginal_diff_density(x_minus: f64, params: &ModelParams) -> Result<f64> {
    Ok(marginal_from_form(
        x_minus,
        &homodyne_quadratic_form(params)?,
    ))
}

/// `X-` density implied by a quadratic form.
pub fn marginal_from_form(x_minus: f64, form: &QuadraticForm2) -> f64 {
    let s = form.minus_weight();
    (2.0 / (PI * s)).sqrt() * (-2.0 * x_minus * x_minus / s).exp()
}

/// `<dX-^2> = (trA + 2 A12) / 4`.
pub fn diff_quadrature_variance(params: &ModelParams) -> Result<f64> {
    Ok(0.25 * homodyne_quadratic_form(params)?.minus_weight())
}

/// Difference-quadrature variance without validation, for inner loops.
pub(crate) fn variance_unchecked(params: &ModelParams) -> f64 {
    let k = coupling(params);
    0.25 * (k.a11 + k.a22 - 4.0 * k.c * (params.phi_c - params.phi_0).cos())
}
