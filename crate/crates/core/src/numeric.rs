//! Small numerical kernels shared by the fitting code.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Copy, Debug)]
pub(crate) struct LmOptions {
    pub max_iter: usize,
    /// Stop when the relative decrease of the residual sum of squares
    /// falls below this.
    pub ftol: f64,
    /// Stop when the relative step falls below this.
    pub xtol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            ftol: 1e-15,
            xtol: 1e-13,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct LmOutcome {
    pub x: Vec<f64>,
    pub rss: f64,
    /// `J^T J` at the solution.
    pub jtj: DMatrix<f64>,
    pub converged: bool,
}

/// Box-constrained Levenberg-Marquardt with forward-difference Jacobian.
///
/// `resid` fills the residual vector and returns `false` when the point is
/// outside the model's domain; such trial steps are rejected.
pub(crate) fn levenberg_marquardt<F>(
    mut resid: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    m: usize,
    opts: LmOptions,
) -> Option<LmOutcome>
where
    F: FnMut(&[f64], &mut [f64]) -> bool,
{
    let n = x0.len();
    let clamp = |x: &mut [f64]| {
        for i in 0..n {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };
    let scale: Vec<f64> = (0..n)
        .map(|i| {
            let w = upper[i] - lower[i];
            if w.is_finite() && w > 0.0 {
                w
            } else {
                x0[i].abs().max(1.0)
            }
        })
        .collect();
    let mut x = x0.to_vec();
    clamp(&mut x);
    let mut r = vec![0.0; m];
    if !resid(&x, &mut r) {
        return None;
    }
    let mut rss: f64 = r.iter().map(|v| v * v).sum();
    let mut lambda = 1e-3;
    let mut jac = DMatrix::zeros(m, n);
    let mut rt = vec![0.0; m];
    let mut converged = false;

    let jacobian =
        |x: &[f64], r: &[f64], jac: &mut DMatrix<f64>, rt: &mut Vec<f64>, resid: &mut F| {
            let mut xt = x.to_vec();
            for j in 0..n {
                let mut h = 1.5e-8 * x[j].abs().max(1e-3);
                // step inward at an upper bound
                if x[j] + h > upper[j] {
                    h = -h;
                }
                xt[j] = x[j] + h;
                let ok = resid(&xt, rt);
                xt[j] = x[j];
                for i in 0..m {
                    jac[(i, j)] = if ok { (rt[i] - r[i]) / h } else { 0.0 };
                }
            }
        };

    jacobian(&x, &r, &mut jac, &mut rt, &mut resid);
    for _ in 0..opts.max_iter {
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * DVector::from_column_slice(&r);
        let mut improved = false;
        // identity damping in box-normalized coordinates; diagonal scaling
        // misbehaves when the Jacobian is nearly rank deficient
        let dmax = (0..n)
            .map(|i| jtj[(i, i)] * scale[i] * scale[i])
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        for _ in 0..30 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * dmax / (scale[i] * scale[i]);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let mut xn: Vec<f64> = (0..n).map(|i| x[i] + step[i]).collect();
            clamp(&mut xn);
            if resid(&xn, &mut rt) {
                let rss_n: f64 = rt.iter().map(|v| v * v).sum();
                if rss_n <= rss {
                    let dx = (0..n)
                        .map(|i| ((xn[i] - x[i]) / x[i].abs().max(1e-8)).abs())
                        .fold(0.0, f64::max);
                    let df = if rss > 0.0 { (rss - rss_n) / rss } else { 0.0 };
                    x = xn;
                    std::mem::swap(&mut r, &mut rt);
                    rss = rss_n;
                    lambda = (lambda * 0.3).max(1e-12);
                    improved = true;
                    if df < opts.ftol || dx < opts.xtol {
                        converged = true;
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            converged = true;
            break;
        }
        jacobian(&x, &r, &mut jac, &mut rt, &mut resid);
        if converged || rss == 0.0 {
            converged = true;
            break;
        }
    }
    let jtj = jac.transpose() * &jac;
    Some(LmOutcome {
        x,
        rss,
        jtj,
        converged,
    })
}

/// Point `index` (from 1) of the Halton sequence in `dim <= 4` dimensions.
pub(crate) fn halton(index: usize, dim: usize) -> Vec<f64> {
    const BASES: [usize; 4] = [2, 3, 5, 7];
    (0..dim)
        .map(|d| {
            let b = BASES[d];
            let (mut f, mut r, mut i) = (1.0, 0.0, index);
            while i > 0 {
                f /= b as f64;
                r += f * (i % b) as f64;
                i /= b;
            }
            r
        })
        .collect()
}

/// Median of finite values; `None` when empty.
pub(crate) fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}
