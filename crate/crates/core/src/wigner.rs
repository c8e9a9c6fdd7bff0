//! Brute-force reference for the difference-quadrature marginal.
//!
//! The covariance is rebuilt from thermal inputs by the two-mode squeezer,
//! pure-loss channels and phase rotations, and the Gaussian Wigner function is
//! summed over (X+, y1, y2) on a uniform lattice. For smooth Gaussians the
//! lattice sum converges faster than any power of the spacing, so accuracy is
//! set by the aliasing exponent and the truncation width.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;

/// Lattice settings for [`wigner_marginal_oracle`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Half-width of each axis in conditional standard deviations.
    pub k_sigma: f64,
    /// Target aliasing exponent `L`: spacing is chosen so the leading
    /// aliasing term is `exp(-L)`.
    pub alias_exponent: f64,
    /// Explicit spacing; overrides `alias_exponent` when set.
    pub spacing: Option<f64>,
    /// Largest tolerated neglected mass (tails plus aliasing).
    pub tolerance: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            k_sigma: 10.0,
            alias_exponent: 30.0,
            spacing: None,
            tolerance: 1e-9,
        }
    }
}

/// Covariance built by symplectic transformations, quadrature order
/// (q1, p1, q2, p2).
pub fn symplectic_covariance(p: &ModelParams) -> Matrix4<f64> {
    let (ch, sh) = (p.r.cosh(), p.r.sinh());
    let mut s = Matrix4::zeros();
    for i in 0..4 {
        s[(i, i)] = ch;
    }
    // two-mode squeezer: q1 -> ch q1 + sh q2, p1 -> ch p1 - sh p2
    s[(0, 2)] = sh;
    s[(2, 0)] = sh;
    s[(1, 3)] = -sh;
    s[(3, 1)] = -sh;
    let input = Matrix4::from_diagonal(&Vector4::new(
        0.5 + p.n_b,
        0.5 + p.n_b,
        0.5 + p.n_b_prime,
        0.5 + p.n_b_prime,
    ));
    let mut sigma = s * input * s.transpose();
    let g = [
        p.epsilon.sqrt(),
        p.epsilon.sqrt(),
        p.epsilon_prime.sqrt(),
        p.epsilon_prime.sqrt(),
    ];
    let noise = [
        1.0 - p.epsilon,
        1.0 - p.epsilon,
        1.0 - p.epsilon_prime,
        1.0 - p.epsilon_prime,
    ];
    for i in 0..4 {
        for j in 0..4 {
            sigma[(i, j)] *= g[i] * g[j];
        }
        sigma[(i, i)] += 0.5 * noise[i];
    }
    let rot = rotation(p.phi_c, -p.phi_0);
    rot * sigma * rot.transpose()
}

fn rotation(theta1: f64, theta2: f64) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    for (k, t) in [(0, theta1), (2, theta2)] {
        let (s, c) = t.sin_cos();
        m[(k, k)] = c;
        m[(k, k + 1)] = -s;
        m[(k + 1, k)] = s;
        m[(k + 1, k + 1)] = c;
    }
    m
}

/// Marginal density of `X-` at `x_minus` by lattice integration of the
/// zero-mean Wigner function.
pub fn wigner_marginal_oracle(x_minus: f64, params: &ModelParams, grid: &GridSpec) -> Result<f64> {
    wigner_marginal_oracle_displaced(x_minus, params, [0.0; 4], grid)
}

/// Same as [`wigner_marginal_oracle`] for a state displaced by `mean`
/// (order q1, p1, q2, p2).
pub fn wigner_marginal_oracle_displaced(
    x_minus: f64,
    params: &ModelParams,
    mean: [f64; 4],
    grid: &GridSpec,
) -> Result<f64> {
    params.validate()?;
    check_grid(grid)?;
    let sigma = symplectic_covariance(params);
    // u = (X-, X+, y1, y2)
    let h2 = 1.0 / SQRT_2;
    let t = Matrix4::new(
        h2, 0.0, -h2, 0.0, //
        h2, 0.0, h2, 0.0, //
        0.0, 1.0, 0.0, 0.0, //
        0.0, 0.0, 0.0, 1.0,
    );
    let su = t * sigma * t.transpose();
    let mu = t * Vector4::from(mean);
    let prec = su
        .try_inverse()
        .ok_or_else(|| Error::GridTooSmall("singular covariance".into()))?;
    let det = su.determinant();

    // conditional covariance of z = (X+, y1, y2) given X- is prec_zz^-1
    let pzz = prec.fixed_view::<3, 3>(1, 1).into_owned();
    let czz = pzz
        .try_inverse()
        .ok_or_else(|| Error::GridTooSmall("singular conditional covariance".into()))?;
    let lam_min = czz.symmetric_eigenvalues().min();
    let h = match grid.spacing {
        Some(h) => h,
        None => 2.0 * PI * (lam_min / (2.0 * grid.alias_exponent)).sqrt(),
    };
    let alias = 6.0 * (-2.0 * PI * PI * lam_min / (h * h)).exp();
    let tail = 3.0 * erfc_bound(grid.k_sigma / SQRT_2);
    if alias + tail > grid.tolerance {
        return Err(Error::GridTooSmall(format!(
            "neglected mass {:.3e} (aliasing {alias:.3e}, tails {tail:.3e}) exceeds {:.3e}",
            alias + tail,
            grid.tolerance
        )));
    }

    // sequential conditionals of (X+, y1, y2) given the preceding coordinates,
    // with later coordinates marginalized; used only to prune the lattice
    let full = DMatrix::from_fn(4, 4, |i, j| su[(i, j)]);
    let mut beta = Vec::with_capacity(3);
    let mut sd = Vec::with_capacity(3);
    for k in 1..4 {
        let prev = full.view((0, 0), (k, k)).into_owned();
        let cross = DVector::from_fn(k, |i, _| full[(i, k)]);
        let b = prev
            .clone()
            .cholesky()
            .ok_or_else(|| Error::GridTooSmall("covariance not positive definite".into()))?
            .solve(&cross);
        let var = full[(k, k)] - b.dot(&cross);
        beta.push(b);
        sd.push(var.max(0.0).sqrt());
    }

    let x = x_minus - mu[0];
    let k = grid.k_sigma;
    let p = |i: usize, j: usize| prec[(i, j)];
    let range = |center: f64, width: f64| -> (i64, i64) {
        let lo = ((center - k * width) / h).ceil() as i64;
        let hi = ((center + k * width) / h).floor() as i64;
        (lo, hi)
    };
    // lattice anchored at the state mean; coordinates below are offsets
    let mut total = 0.0;
    let c1 = beta[0][0] * x;
    let (lo1, hi1) = range(c1, sd[0]);
    for i1 in lo1..=hi1 {
        let z1 = i1 as f64 * h;
        let c2 = beta[1][0] * x + beta[1][1] * z1;
        let (lo2, hi2) = range(c2, sd[1]);
        for i2 in lo2..=hi2 {
            let z2 = i2 as f64 * h;
            let c3 = beta[2][0] * x + beta[2][1] * z1 + beta[2][2] * z2;
            let (lo3, hi3) = range(c3, sd[2]);
            // quadratic form as a + b z3 + c z3^2
            let a = p(0, 0) * x * x
                + p(1, 1) * z1 * z1
                + p(2, 2) * z2 * z2
                + 2.0 * (p(0, 1) * x * z1 + p(0, 2) * x * z2 + p(1, 2) * z1 * z2);
            let b = 2.0 * (p(0, 3) * x + p(1, 3) * z1 + p(2, 3) * z2);
            let c = p(3, 3);
            for i3 in lo3..=hi3 {
                let z3 = i3 as f64 * h;
                total += (-0.5 * (a + z3 * (b + c * z3))).exp();
            }
        }
    }
    Ok(total * h * h * h / (4.0 * PI * PI * det.sqrt()))
}

fn check_grid(grid: &GridSpec) -> Result<()> {
    if !(grid.k_sigma >= 8.0) {
        return Err(Error::GridTooSmall(format!(
            "k_sigma {} below 8 standard deviations",
            grid.k_sigma
        )));
    }
    if let Some(h) = grid.spacing {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::GridTooSmall(format!("spacing {h} not positive")));
        }
    } else if !(grid.alias_exponent > 0.0) {
        return Err(Error::GridTooSmall(
            "alias exponent must be positive".into(),
        ));
    }
    if !(grid.tolerance > 0.0) {
        return Err(Error::GridTooSmall("tolerance must be positive".into()));
    }
    Ok(())
}

/// Upper bound `exp(-x^2) / (x sqrt pi)` on `erfc(x)` for `x > 0`.
fn erfc_bound(x: f64) -> f64 {
    (-x * x).exp() / (x * PI.sqrt())
}
