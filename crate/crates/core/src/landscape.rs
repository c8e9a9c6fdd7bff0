//! Cost function, its small-angle expansions, the coherently seeded variant
//! and landscape sweeps.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gaussian::{diff_quadrature_variance, homodyne_quadratic_form};
use crate::homodyne::CostEvaluator;
use crate::params::ModelParams;

/// `C = -rho(0) = -sqrt(2 / (pi (trA + 2 A12)))`.
pub fn cost(params: &ModelParams) -> Result<f64> {
    let s = homodyne_quadratic_form(params)?.minus_weight();
    Ok(-(2.0 / (PI * s)).sqrt())
}

/// Cost of a difference-quadrature variance, `-1 / sqrt(2 pi V)`.
pub fn cost_from_variance(variance: f64) -> f64 {
    -1.0 / (2.0 * PI * variance).sqrt()
}

/// Inverse of [`cost_from_variance`].
pub fn variance_from_cost(cost: f64) -> f64 {
    1.0 / (2.0 * PI * cost * cost)
}

/// Analytic `dC / d(phi_c)`.
pub fn cost_gradient(params: &ModelParams) -> Result<f64> {
    let v = diff_quadrature_variance(params)?;
    let n = params.n();
    let c = (params.epsilon * params.epsilon_prime).sqrt()
        * (n * (n + 1.0)).sqrt()
        * (1.0 + params.n_b + params.n_b_prime);
    let dv = c * (params.phi_c - params.phi_0).sin();
    Ok(PI * (2.0 * PI * v).powf(-1.5) * dv)
}

/// Cost divided by the magnitude of its value at zero phase difference.
pub fn normalized_cost(params: &ModelParams) -> Result<f64> {
    let c = cost(params)?;
    let c0 = cost(&params.with_delta_phi(0.0))?;
    Ok(c / c0.abs())
}

/// Curvature `f(N) = sqrt(N(N+1)) (2 sqrt(N(N+1)) + 2N + 1)` of the
/// normalized ideal cost at its minimum.
pub fn quadratic_coefficient_f(n_photons: f64) -> Result<f64> {
    if !(n_photons >= 0.0) || !n_photons.is_finite() {
        return Err(invalid(
            "n_photons",
            format!("{n_photons} must be finite and >= 0"),
        ));
    }
    let g = (n_photons * (n_photons + 1.0)).sqrt();
    Ok(g * (2.0 * g + 2.0 * n_photons + 1.0))
}

/// Pure two-mode squeezer seeded with `|alpha>|alpha>`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeededParams {
    pub r: f64,
    pub alpha: f64,
    pub phi_0: f64,
    pub phi_c: f64,
}

impl SeededParams {
    /// Mean photon number per mode, `alpha^2 e^{2r} + sinh^2 r`.
    pub fn energy(&self) -> f64 {
        self.alpha * self.alpha * (2.0 * self.r).exp() + self.r.sinh().powi(2)
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("r", self.r),
            ("alpha", self.alpha),
            ("phi_0", self.phi_0),
            ("phi_c", self.phi_c),
        ] {
            if !v.is_finite() {
                return Err(invalid(name, format!("{v} is not finite")));
            }
        }
        if self.r < 0.0 {
            return Err(invalid("r", format!("{} < 0", self.r)));
        }
        Ok(())
    }
}

/// `-P(sqrt2 e^r alpha, sqrt2 e^r alpha)` divided by its global maximum `1/pi`.
pub fn seeded_cost(params: &SeededParams) -> Result<f64> {
    params.validate()?;
    let r = params.r;
    let d = params.phi_c - params.phi_0;
    let (a11, a12) = ((2.0 * r).cosh(), -(2.0 * r).sinh() * d.cos());
    let det = a11 * a11 - a12 * a12;
    let amp = 2f64.sqrt() * r.exp() * params.alpha;
    let u = [
        amp * (1.0 - params.phi_c.cos()),
        amp * (1.0 - params.phi_0.cos()),
    ];
    let form = a11 * (u[0] * u[0] + u[1] * u[1]) + 2.0 * a12 * u[0] * u[1];
    Ok(-(-form / det).exp() / det.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandscapeRow {
    pub delta_phi: f64,
    pub cost: f64,
    pub variance: f64,
    pub cost_stderr: Option<f64>,
}

/// Cost against phase difference on a strictly increasing grid.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LandscapeTable {
    pub rows: Vec<LandscapeRow>,
}

impl LandscapeTable {
    pub fn delta_phi(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.delta_phi).collect()
    }

    pub fn costs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.cost).collect()
    }

    pub fn to_csv(&self) -> String {
        let with_err = self.rows.iter().any(|r| r.cost_stderr.is_some());
        let mut s = String::from("delta_phi_rad,cost,variance");
        if with_err {
            s.push_str(",cost_stderr");
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(
                s,
                "{:.17e},{:.17e},{:.17e}",
                r.delta_phi, r.cost, r.variance
            );
            if with_err {
                let _ = write!(s, ",{:.17e}", r.cost_stderr.unwrap_or(0.0));
            }
            s.push('\n');
        }
        s
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid("grid", "empty"));
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(invalid("grid", "non-finite entry"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("grid", "not strictly increasing"));
    }
    Ok(())
}

/// Evenly spaced grid of `points` values from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / (points - 1) as f64;
            (0..points).map(|i| start + step * i as f64).collect()
        }
    }
}

/// Analytic sweep with `phi_c = phi_0 + delta_phi` for each grid value.
pub fn landscape_sweep(base: &ModelParams, grid: &[f64]) -> Result<LandscapeTable> {
    check_grid(grid)?;
    base.validate()?;
    let rows = grid
        .iter()
        .map(|&d| {
            let p = base.with_delta_phi(d);
            Ok(LandscapeRow {
                delta_phi: d,
                cost: cost(&p)?,
                variance: diff_quadrature_variance(&p)?,
                cost_stderr: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LandscapeTable { rows })
}

/// Monte Carlo sweep: one simulated measurement window per grid point.
pub fn landscape_sweep_mc(
    base: &ModelParams,
    grid: &[f64],
    evaluator: &CostEvaluator,
    seed: u64,
) -> Result<LandscapeTable> {
    check_grid(grid)?;
    base.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = grid
        .iter()
        .map(|&d| {
            let est = evaluator.evaluate(&base.with_delta_phi(d), &mut rng)?;
            Ok(LandscapeRow {
                delta_phi: d,
                cost: est.cost,
                variance: est.variance,
                cost_stderr: Some(est.stderr),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LandscapeTable { rows })
}

/// Location and full width at half depth of the cost dip.
///
/// The half level is midway between the lowest and highest cost; crossings
/// are linearly interpolated on each side of the lowest point.
pub fn dip_fwhm(delta_phi: &[f64], cost: &[f64]) -> Result<(f64, f64)> {
    if delta_phi.len() != cost.len() || delta_phi.len() < 3 {
        return Err(invalid("landscape", "need at least 3 matching points"));
    }
    let (imin, cmin) = cost
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty");
    let cmax = cost.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let half = 0.5 * (cmin + cmax);
    let cross = |i: usize, j: usize| {
        let t = (half - cost[i]) / (cost[j] - cost[i]);
        delta_phi[i] + t * (delta_phi[j] - delta_phi[i])
    };
    let left = (0..imin)
        .rev()
        .find(|&i| cost[i] >= half)
        .map(|i| cross(i + 1, i));
    let right = (imin + 1..cost.len())
        .find(|&i| cost[i] >= half)
        .map(|i| cross(i - 1, i));
    match (left, right) {
        (Some(l), Some(r)) if cmax > cmin => Ok((delta_phi[imin], r - l)),
        _ => Err(crate::error::Error::MinimumNotBracketed(format!(
            "cost dip at {:.4} rad does not rise to half depth on both sides",
            delta_phi[imin]
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cost_anchors() {
        let c = cost(&ModelParams::vacuum()).unwrap();
        assert!((c + 1.0 / PI.sqrt()).abs() < 1e-12);
        let c = cost(&ModelParams::ideal(0.74)).unwrap();
        assert!((c + 0.74f64.exp() / PI.sqrt()).abs() < 1e-12);
        assert!((c + 1.18246).abs() < 1e-4);
        let c = cost(&ModelParams::ideal(0.74).with_delta_phi(PI / 2.0)).unwrap();
        let v = (1.0 + 2.0 * 0.74f64.sinh().powi(2)) / 2.0;
        assert!((c - cost_from_variance(v)).abs() < 1e-12);
        assert!((c + 0.3712).abs() < 1e-4);
    }

    #[test]
    fn normalized_cost_is_minus_one_at_zero() {
        for r in [0.1, 0.74, 2.0] {
            let p = ModelParams::new(r, 0.77, 0.6, 0.4).with_phases(1.2, 1.2);
            assert!((normalized_cost(&p).unwrap() + 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn f_values() {
        assert_eq!(quadratic_coefficient_f(0.0).unwrap(), 0.0);
        let f1 = quadratic_coefficient_f(1.0).unwrap();
        assert!((f1 - (4.0 + 3.0 * 2f64.sqrt())).abs() < 1e-12);
        assert!((f1 - 8.24264).abs() < 1e-5);
        let n = 100.0;
        let ratio = quadratic_coefficient_f(n).unwrap() / (2.0 * n * n);
        assert!((ratio - 2.0).abs() < 0.03);
        assert!(quadratic_coefficient_f(-0.1).is_err());
    }

    #[test]
    fn f_matches_second_difference_of_normalized_cost() {
        for n in [0.03f64, 0.1, 0.5, 1.0] {
            let r = n.sqrt().asinh();
            let p = ModelParams::ideal(r);
            let h = 1e-3;
            let c = |d: f64| normalized_cost(&p.with_delta_phi(d)).unwrap();
            let fd = (c(h) - 2.0 * c(0.0) + c(-h)) / (h * h);
            let f = quadratic_coefficient_f(n).unwrap();
            assert!(((fd - f) / f).abs() < 1e-4, "N={n}: {fd} vs {f}");
        }
    }

    #[test]
    fn analytic_gradient_matches_difference() {
        let p = ModelParams::new(0.6, 0.77, 0.5, 0.3).with_phases(0.2, 0.9);
        let h = 1e-6;
        let fd = (cost(&p.with_phases(0.2, 0.9 + h)).unwrap()
            - cost(&p.with_phases(0.2, 0.9 - h)).unwrap())
            / (2.0 * h);
        let g = cost_gradient(&p).unwrap();
        assert!((fd - g).abs() < 1e-8 * g.abs().max(1.0));
    }

    #[test]
    fn seeded_unit_minimum() {
        for r in [0.0, 0.4, 1.3] {
            let s = SeededParams {
                r,
                alpha: 0.0,
                phi_0: 0.3,
                phi_c: 0.3,
            };
            assert!((seeded_cost(&s).unwrap() + 1.0).abs() < 1e-13);
        }
        let s = SeededParams {
            r: 0.5,
            alpha: 0.7,
            phi_0: 0.0,
            phi_c: 0.0,
        };
        assert!((seeded_cost(&s).unwrap() + 1.0).abs() < 1e-13);
        assert!((s.energy() - (0.49 * 1f64.exp() + 0.5f64.sinh().powi(2))).abs() < 1e-12);
    }

    #[test]
    fn flat_landscape_at_tiny_squeezing() {
        let t = landscape_sweep(&ModelParams::ideal(0.01), &linspace(-PI, PI, 201)).unwrap();
        let c = t.costs();
        let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // the dip depth is 1 - exp(-2r) of the minimum
        let depth = (hi - lo) / lo.abs();
        assert!((depth - (1.0 - (-0.02f64).exp())).abs() < 1e-12);
        assert!(depth < 0.02);
    }

    #[test]
    fn fwhm_narrows_with_squeezing() {
        let grid = linspace(-PI, PI, 4001);
        let mut prev = f64::INFINITY;
        for r in [0.18, 0.35, 0.74] {
            let t = landscape_sweep(&ModelParams::ideal(r), &grid).unwrap();
            let (at, w) = dip_fwhm(&t.delta_phi(), &t.costs()).unwrap();
            assert!(at.abs() < 1e-12);
            assert!(w < prev);
            prev = w;
        }
    }

    #[test]
    fn grid_validation() {
        let p = ModelParams::ideal(0.3);
        assert!(landscape_sweep(&p, &[]).is_err());
        assert!(landscape_sweep(&p, &[0.0, 0.0]).is_err());
        assert!(landscape_sweep(&p, &[0.1, -0.1]).is_err());
    }

    #[test]
    fn csv_header_and_rows() {
        let t = landscape_sweep(&ModelParams::ideal(0.3), &[-0.1, 0.0, 0.1]).unwrap();
        let csv = t.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "delta_phi_rad,cost,variance");
        assert_eq!(lines.len(), 4);
    }

    #[test]
    fn plateau_flattens_with_squeezing() {
        let gap = |r: f64| {
            let p = ModelParams::ideal(r);
            (cost(&p.with_delta_phi(PI)).unwrap() - cost(&p.with_delta_phi(PI / 2.0)).unwrap())
                .abs()
        };
        let mut prev = gap(0.5);
        for r in [1.0, 1.5, 2.0, 3.0, 4.0, 6.0] {
            let g = gap(r);
            assert!(g < prev);
            assert!(g < 0.24 * (-r).exp());
            prev = g;
        }
    }

    proptest! {
        #[test]
        fn even_in_delta_phi(r in 0.0..2.0f64, e in 0.0..=1.0f64, ep in 0.0..=1.0f64,
                             nbp in 0.0..2.0f64, d in -PI..PI) {
            let p = ModelParams::new(r, e, ep, nbp);
            let a = cost(&p.with_delta_phi(d)).unwrap();
            let b = cost(&p.with_delta_phi(-d)).unwrap();
            prop_assert!((a - b).abs() <= 1e-14 * a.abs());
        }

        #[test]
        fn minimum_at_zero(r in 0.01..2.0f64, e in 0.05..=1.0f64, ep in 0.05..=1.0f64,
                           nbp in 0.0..2.0f64, d in -PI..PI) {
            prop_assume!(d.abs() > 1e-6);
            let p = ModelParams::new(r, e, ep, nbp);
            prop_assert!(cost(&p.with_delta_phi(d)).unwrap() > cost(&p).unwrap());
        }

        #[test]
        fn f_strictly_increasing(a in 0.0..50.0f64, b in 0.0..50.0f64) {
            prop_assume!((a - b).abs() > 1e-9);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(quadratic_coefficient_f(lo).unwrap() < quadratic_coefficient_f(hi).unwrap());
        }
    }
}
