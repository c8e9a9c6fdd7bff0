//! Parameter recovery from measured landscapes: squeezing from the minimum
//! variance, bounded least-squares fits of the loss and seed noise, and AIC
//! model selection.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::hash::{DefaultHasher, Hash, Hasher};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gaussian::variance_unchecked;
use crate::landscape::{cost_from_variance, dip_fwhm, variance_from_cost, LandscapeTable};
use crate::numeric::{halton, levenberg_marquardt, LmOptions};
use crate::params::ModelParams;

/// Coefficients of `a R^2 + b R + c = 0` in `R = exp(-2r) / 2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

fn check_inputs(epsilon: f64, epsilon_prime: f64, n_in: f64, variance: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(invalid("epsilon", format!("{epsilon} outside (0, 1]")));
    }
    if !(epsilon_prime > 0.0 && epsilon_prime <= 1.0) {
        return Err(invalid(
            "epsilon_prime",
            format!("{epsilon_prime} outside (0, 1]"),
        ));
    }
    if !(n_in >= 0.5) || !n_in.is_finite() {
        return Err(invalid("n_in", format!("{n_in} must be >= 1/2")));
    }
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(invalid(
            "measured_variance",
            format!("{variance} must be positive"),
        ));
    }
    Ok(())
}

/// Minimum-variance relation at zero phase difference written as a
/// quadratic in `R`. The conjugate mode carries no excess noise.
pub fn quadratic_coeffs(
    epsilon: f64,
    epsilon_prime: f64,
    n_in: f64,
    measured_variance: f64,
) -> Result<QuadraticCoeffs> {
    check_inputs(epsilon, epsilon_prime, n_in, measured_variance)?;
    let (e, ep) = (epsilon, epsilon_prime);
    let g = (e * ep).sqrt() * (2.0 * n_in + 1.0);
    Ok(QuadraticCoeffs {
        a: (ep + e) * n_in / 2.0 + (ep + e) / 4.0 + g / 2.0,
        b: (ep - e) * n_in / 2.0 + (e - ep) / 4.0 + (2.0 - ep - e) / 2.0 - 2.0 * measured_variance,
        c: (ep + e) * n_in / 8.0 + (ep + e) / 16.0 - g / 8.0,
    })
}

/// Squeezing recovered from a minimum variance, with the rejected root.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootSelection {
    pub r: f64,
    pub root: f64,
    pub discarded_root: f64,
}

/// Solves the quadratic for `R` and returns `r = -ln(2R) / 2`.
///
/// Admissible roots lie in `(0, 1/2]`. When both are admissible the larger
/// is taken: it is the low-squeezing branch, on which the minimum variance
/// decreases monotonically with `r`.
pub fn solve_r_detailed(
    epsilon: f64,
    epsilon_prime: f64,
    n_in: f64,
    measured_variance: f64,
) -> Result<RootSelection> {
    let q = quadratic_coeffs(epsilon, epsilon_prime, n_in, measured_variance)?;
    let disc = q.b * q.b - 4.0 * q.a * q.c;
    if disc < 0.0 {
        return Err(Error::NoPhysicalRoot(format!(
            "complex roots for variance {measured_variance}"
        )));
    }
    // cancellation-free pair
    let t = -0.5 * (q.b + q.b.signum() * disc.sqrt());
    let (r1, r2) = if t == 0.0 {
        (0.0, 0.0)
    } else {
        (t / q.a, q.c / t)
    };
    let (hi, lo) = if r1 >= r2 { (r1, r2) } else { (r2, r1) };
    let ok = |x: f64| x > 0.0 && x <= 0.5 * (1.0 + 1e-12);
    let (root, discarded) = if ok(hi) {
        (hi, lo)
    } else if ok(lo) {
        (lo, hi)
    } else {
        return Err(Error::NoPhysicalRoot(format!(
            "roots {lo:.6e}, {hi:.6e} outside (0, 1/2] for variance {measured_variance}"
        )));
    };
    Ok(RootSelection {
        r: (-0.5 * (2.0 * root).ln()).max(0.0),
        root: root.min(0.5),
        discarded_root: discarded,
    })
}

pub fn solve_r(epsilon: f64, epsilon_prime: f64, n_in: f64, measured_variance: f64) -> Result<f64> {
    solve_r_detailed(epsilon, epsilon_prime, n_in, measured_variance).map(|s| s.r)
}

/// Like [`solve_r`], but without a physical root returns the squeezing whose
/// minimum variance comes closest, together with the relative mismatch
/// `(V(r) - measured) / measured`. The mismatch is zero when a root exists.
pub fn nearest_squeezing(
    epsilon: f64,
    epsilon_prime: f64,
    n_in: f64,
    measured_variance: f64,
) -> Result<(f64, f64)> {
    match solve_r_detailed(epsilon, epsilon_prime, n_in, measured_variance) {
        Ok(s) => Ok((s.r, 0.0)),
        Err(Error::NoPhysicalRoot(_)) => {
            let q = quadratic_coeffs(epsilon, epsilon_prime, n_in, measured_variance)?;
            // V(R) = v + (a R^2 + b R + c) / 2R is smallest at sqrt(c / a)
            let big_r = if q.c > 0.0 {
                (q.c / q.a).sqrt().min(0.5)
            } else {
                0.5
            };
            let v = measured_variance + (q.a * big_r * big_r + q.b * big_r + q.c) / (2.0 * big_r);
            Ok((
                -0.5 * (2.0 * big_r).ln(),
                (v - measured_variance) / measured_variance,
            ))
        }
        Err(e) => Err(e),
    }
}

/// Mean measured variance within `fraction / 2` of the dip's full width at
/// half depth around the empirical minimum.
pub fn estimate_min_variance(delta_phi: &[f64], variance: &[f64], fraction: f64) -> Result<f64> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(invalid(
            "fwhm_fraction",
            format!("{fraction} outside (0, 1)"),
        ));
    }
    if variance.iter().any(|v| !(*v > 0.0)) {
        return Err(invalid("variance", "all values must be positive"));
    }
    let cost: Vec<f64> = variance.iter().map(|&v| cost_from_variance(v)).collect();
    let (center, width) = dip_fwhm(delta_phi, &cost)?;
    let half = 0.5 * fraction * width;
    let inside: Vec<f64> = delta_phi
        .iter()
        .zip(variance)
        .filter(|(d, _)| (**d - center).abs() <= half)
        .map(|(_, v)| *v)
        .collect();
    // the empirical minimum itself is always inside
    Ok(inside.iter().sum::<f64>() / inside.len() as f64)
}

/// Measured landscape: `(delta_phi, cost)` with optional per-point errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandscapeData {
    pub delta_phi: Vec<f64>,
    pub cost: Vec<f64>,
    pub cost_stderr: Option<Vec<f64>>,
}

impl LandscapeData {
    pub fn new(delta_phi: Vec<f64>, cost: Vec<f64>, cost_stderr: Option<Vec<f64>>) -> Result<Self> {
        let d = Self {
            delta_phi,
            cost,
            cost_stderr,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn from_table(table: &LandscapeTable) -> Result<Self> {
        let stderr: Option<Vec<f64>> = table.rows.iter().map(|r| r.cost_stderr).collect();
        Self::new(table.delta_phi(), table.costs(), stderr)
    }

    pub fn len(&self) -> usize {
        self.cost.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cost.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta_phi.len() != self.cost.len() {
            return Err(invalid("landscape", "delta_phi and cost lengths differ"));
        }
        if let Some(s) = &self.cost_stderr {
            if s.len() != self.cost.len() {
                return Err(invalid("landscape", "cost_stderr length differs"));
            }
        }
        if self
            .cost
            .iter()
            .chain(&self.delta_phi)
            .any(|v| !v.is_finite())
        {
            return Err(invalid("landscape", "non-finite value"));
        }
        if self.cost.iter().any(|&c| c >= 0.0) {
            return Err(invalid("landscape", "costs must be negative"));
        }
        Ok(())
    }

    /// Variances implied by the costs.
    pub fn variances(&self) -> Vec<f64> {
        self.cost.iter().map(|&c| variance_from_cost(c)).collect()
    }

    /// Identity of the data, used to reject comparisons across data sets.
    pub fn digest(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for v in self.delta_phi.iter().chain(&self.cost) {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }

    fn grid_spacing(&self) -> f64 {
        let mut d = self.delta_phi.clone();
        d.sort_by(f64::total_cmp);
        d.windows(2)
            .map(|w| w[1] - w[0])
            .filter(|s| *s > 0.0)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Box for the two free parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitBounds {
    pub epsilon_prime: (f64, f64),
    pub n_in: (f64, f64),
}

impl FitBounds {
    /// Rows of the measured-apparatus bounds; rows 0 and 1 cap the probe
    /// transmissivity at 0.7, row 2 at 0.6.
    pub fn table(row: usize) -> Result<Self> {
        let ep_hi = match row {
            0 | 1 => 0.7,
            2 => 0.6,
            _ => return Err(invalid("bounds_row", format!("{row} not in 0..3"))),
        };
        Ok(Self {
            epsilon_prime: (0.0, ep_hi),
            n_in: (0.71, 10.0),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.epsilon_prime;
        if !(0.0 <= a && a < b && b <= 1.0) {
            return Err(invalid("bounds.epsilon_prime", format!("({a}, {b})")));
        }
        let (a, b) = self.n_in;
        if !(0.5 <= a && a < b && b.is_finite()) {
            return Err(invalid("bounds.n_in", format!("({a}, {b})")));
        }
        Ok(())
    }
}

impl Default for FitBounds {
    fn default() -> Self {
        Self::table(2).expect("row 2 exists")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitOptions {
    #[serde(default = "fit_defaults::starts")]
    pub starts: usize,
    #[serde(default = "fit_defaults::fwhm_fraction")]
    pub fwhm_fraction: f64,
    /// Divide residuals by the per-point cost errors when present.
    #[serde(default)]
    pub weighted: bool,
}

mod fit_defaults {
    pub fn starts() -> usize {
        16
    }
    pub fn fwhm_fraction() -> f64 {
        0.12
    }
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            starts: fit_defaults::starts(),
            fwhm_fraction: fit_defaults::fwhm_fraction(),
            weighted: false,
        }
    }
}

/// A parametric cost landscape whose squeezing is fixed by the measured
/// minimum variance.
pub trait CostModel: Sync {
    fn name(&self) -> &'static str;
    fn parameter_names(&self) -> &'static [&'static str];
    /// Lower and upper bounds per parameter.
    fn bounds(&self) -> (Vec<f64>, Vec<f64>);
    /// Squeezing implied by `theta` and the minimum variance, with the
    /// relative variance mismatch when no exact solution exists (see
    /// [`nearest_squeezing`]).
    fn squeezing(&self, theta: &[f64], min_variance: f64) -> Result<(f64, f64)>;
    /// Cost at `delta_phi` given the squeezing from [`Self::squeezing`].
    fn cost(&self, theta: &[f64], r: f64, delta_phi: f64) -> f64;
}

/// Thermal seed noise on the probe: free `(epsilon_prime, n_in)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoisySeedModel {
    pub epsilon: f64,
    pub bounds: FitBounds,
}

impl NoisySeedModel {
    fn params(&self, theta: &[f64], r: f64, delta_phi: f64) -> ModelParams {
        ModelParams::new(r, self.epsilon, theta[0], theta[1] - 0.5).with_delta_phi(delta_phi)
    }
}

impl CostModel for NoisySeedModel {
    fn name(&self) -> &'static str {
        "noisy-seed"
    }

    fn parameter_names(&self) -> &'static [&'static str] {
        &["epsilon_prime", "n_in"]
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let b = self.bounds;
        // transmissivity zero is outside the model's domain
        (
            vec![b.epsilon_prime.0.max(1e-6), b.n_in.0],
            vec![b.epsilon_prime.1, b.n_in.1],
        )
    }

    fn squeezing(&self, theta: &[f64], min_variance: f64) -> Result<(f64, f64)> {
        nearest_squeezing(self.epsilon, theta[0], theta[1], min_variance)
    }

    fn cost(&self, theta: &[f64], r: f64, delta_phi: f64) -> f64 {
        cost_from_variance(variance_unchecked(&self.params(theta, r, delta_phi)))
    }
}

/// Illustrative alternative: seed noise fixed at its measured value and
/// additive detector noise `kappa_p`, `kappa_c` on the probe and conjugate
/// homodynes, free `(epsilon_prime, kappa_p, kappa_c)`. Only the sum of the
/// two noise terms is visible in the difference quadrature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoisyHomodyneModel {
    pub epsilon: f64,
    pub n_in: f64,
    pub epsilon_prime_bounds: (f64, f64),
    pub kappa_max: f64,
}

impl NoisyHomodyneModel {
    pub fn new(epsilon: f64, bounds: &FitBounds) -> Self {
        Self {
            epsilon,
            n_in: bounds.n_in.0,
            epsilon_prime_bounds: bounds.epsilon_prime,
            kappa_max: 2.0,
        }
    }

    fn excess(theta: &[f64]) -> f64 {
        0.5 * (theta[1] + theta[2])
    }
}

impl CostModel for NoisyHomodyneModel {
    fn name(&self) -> &'static str {
        "noisy-homodyne"
    }

    fn parameter_names(&self) -> &'static [&'static str] {
        &["epsilon_prime", "kappa_p", "kappa_c"]
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (
            vec![self.epsilon_prime_bounds.0.max(1e-6), 0.0, 0.0],
            vec![self.epsilon_prime_bounds.1, self.kappa_max, self.kappa_max],
        )
    }

    fn squeezing(&self, theta: &[f64], min_variance: f64) -> Result<(f64, f64)> {
        let excess = Self::excess(theta);
        let v = min_variance - excess;
        if !(v > 0.0) {
            // vacuum-level floor: the closest the model gets
            let (_, gap) = nearest_squeezing(self.epsilon, theta[0], self.n_in, min_variance)?;
            let floor = (1.0 + gap) * min_variance + excess;
            return Ok((0.0, (floor - min_variance) / min_variance));
        }
        let (r, gap) = nearest_squeezing(self.epsilon, theta[0], self.n_in, v)?;
        Ok((r, gap * v / min_variance))
    }

    fn cost(&self, theta: &[f64], r: f64, delta_phi: f64) -> f64 {
        let p =
            ModelParams::new(r, self.epsilon, theta[0], self.n_in - 0.5).with_delta_phi(delta_phi);
        cost_from_variance(variance_unchecked(&p) + Self::excess(theta))
    }
}

/// Outcome of a bounded fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub epsilon_prime: f64,
    pub n_in: f64,
    pub n_b_prime: f64,
    pub r: f64,
    pub rss: f64,
    pub n_points: usize,
    /// Number of free parameters.
    pub k: usize,
    pub aic: f64,
    /// `name:lower` / `name:upper` for every parameter sitting on a bound.
    pub bounds_active: Vec<String>,
    pub warnings: Vec<String>,
    /// All fitted parameters by name.
    pub parameters: BTreeMap<String, f64>,
    pub min_variance: f64,
    /// Whether all successful starts reached the same minimizer.
    pub unique_minimizer: bool,
    #[serde(skip)]
    pub data_digest: u64,
}

/// Fits the thermal-seed model with `epsilon` held fixed.
pub fn fit_cost_model(
    data: &LandscapeData,
    epsilon: f64,
    bounds: &FitBounds,
    options: &FitOptions,
) -> Result<FitResult> {
    bounds.validate()?;
    let model = NoisySeedModel {
        epsilon,
        bounds: *bounds,
    };
    fit_model(&model, data, options)
}

/// Bounded multi-start least squares of any [`CostModel`].
pub fn fit_model(
    model: &dyn CostModel,
    data: &LandscapeData,
    options: &FitOptions,
) -> Result<FitResult> {
    data.validate()?;
    if data.len() < 10 {
        return Err(invalid(
            "landscape",
            format!("{} points, need at least 10", data.len()),
        ));
    }
    let (lo, hi) = data
        .delta_phi
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &d| {
            (a.min(d), b.max(d))
        });
    if hi - lo < PI - 1e-9 {
        return Err(invalid(
            "landscape",
            format!("spans {:.3} rad, need pi", hi - lo),
        ));
    }
    if options.starts < 1 {
        return Err(invalid("starts", "need at least one start"));
    }
    let weights: Vec<f64> = match (&data.cost_stderr, options.weighted) {
        (Some(s), true) => {
            if s.iter().any(|v| !(*v > 0.0)) {
                return Err(invalid("cost_stderr", "weighted fit needs positive errors"));
            }
            s.iter().map(|v| 1.0 / v).collect()
        }
        (None, true) => return Err(invalid("weighted", "data has no cost errors")),
        _ => vec![1.0; data.len()],
    };

    let variances = data.variances();
    let vmin = estimate_min_variance(&data.delta_phi, &variances, options.fwhm_fraction)?;
    let (center, _) = dip_fwhm(&data.delta_phi, &data.cost)?;

    let (lower, upper) = model.bounds();
    let dim = lower.len();
    let m = data.len();
    // the last residual penalizes parameters for which no squeezing
    // reproduces the measured minimum
    let penalty = 10.0 * (m as f64).sqrt() * weights.iter().copied().fold(0.0, f64::max);
    let weights = &weights;
    let resid_with = |weight: f64| {
        move |theta: &[f64], out: &mut [f64]| -> bool {
            let Ok((r, gap)) = model.squeezing(theta, vmin) else {
                return false;
            };
            for i in 0..m {
                out[i] = (model.cost(theta, r, data.delta_phi[i]) - data.cost[i]) * weights[i];
            }
            out[m] = weight * gap;
            out.iter().all(|v| v.is_finite())
        }
    };
    let feasible = |x: &[f64]| matches!(model.squeezing(x, vmin), Ok((_, g)) if g.abs() < 1e-9);

    let starts: Vec<Vec<f64>> = (1..=options.starts)
        .map(|i| {
            halton(i, dim)
                .iter()
                .enumerate()
                .map(|(j, u)| lower[j] + u * (upper[j] - lower[j]))
                .collect()
        })
        .collect();
    // a misspecified model trades residual against the penalty, so the
    // weight is raised until the minimum is reproduced
    let outcomes: Vec<_> = starts
        .par_iter()
        .filter_map(|x0| {
            let mut out = None;
            let mut x = x0.clone();
            for scale in [1.0, 1e2, 1e4, 1e6, 1e8] {
                let o = levenberg_marquardt(
                    resid_with(penalty * scale),
                    &x,
                    &lower,
                    &upper,
                    m + 1,
                    LmOptions::default(),
                )?;
                x = o.x.clone();
                let done = feasible(&o.x);
                out = Some(o);
                if done {
                    break;
                }
            }
            out
        })
        .filter(|o| feasible(&o.x))
        .collect();
    let best = outcomes
        .iter()
        .min_by(|a, b| a.rss.total_cmp(&b.rss))
        .ok_or_else(|| {
            Error::NonConvergence(format!(
                "none of {} starts reached parameters with a physical squeezing root",
                options.starts
            ))
        })?;

    let mut warnings = Vec::new();
    if !best.converged {
        warnings.push("best start hit the iteration limit".to_string());
    }
    // starts that reach the best objective should share one minimizer
    let tol = best.rss * 1e-6 + 1e-24 * m as f64;
    let unique_minimizer = outcomes
        .iter()
        .filter(|o| o.rss <= best.rss + tol)
        .all(|o| (0..dim).all(|j| (o.x[j] - best.x[j]).abs() <= 1e-3 * (upper[j] - lower[j])));
    if !unique_minimizer {
        warnings.push("starts disagree on the minimizer; the fit is not unique".to_string());
    }
    if center.abs() > data.grid_spacing() {
        warnings.push(format!(
            "empirical minimum at {center:.4} rad is off the fitted minimum at 0"
        ));
    }

    let names = model.parameter_names();
    let mut bounds_active = Vec::new();
    for j in 0..dim {
        let span = upper[j] - lower[j];
        if best.x[j] - lower[j] <= 1e-9 * span {
            bounds_active.push(format!("{}:lower", names[j]));
        }
        if upper[j] - best.x[j] <= 1e-9 * span {
            bounds_active.push(format!("{}:upper", names[j]));
        }
    }
    if !bounds_active.is_empty() {
        warnings.push(format!(
            "parameters on bounds: {}",
            bounds_active.join(", ")
        ));
    }

    let parameters: BTreeMap<String, f64> = names
        .iter()
        .zip(&best.x)
        .map(|(n, v)| (n.to_string(), *v))
        .collect();
    let n_in = parameters.get("n_in").copied().unwrap_or_else(|| {
        // models with the seed noise held fixed
        match model.name() {
            "noisy-homodyne" => 0.0,
            _ => f64::NAN,
        }
    });
    let (r, _) = model.squeezing(&best.x, vmin)?;
    let rss: f64 = (0..m)
        .map(|i| ((model.cost(&best.x, r, data.delta_phi[i]) - data.cost[i]) * weights[i]).powi(2))
        .sum();
    Ok(FitResult {
        model: model.name().to_string(),
        epsilon_prime: best.x[0],
        n_in,
        n_b_prime: n_in - 0.5,
        r,
        rss,
        n_points: m,
        k: dim,
        aic: aic(dim, m, rss.max(f64::MIN_POSITIVE))?,
        bounds_active,
        warnings,
        parameters,
        min_variance: vmin,
        unique_minimizer,
        data_digest: data.digest(),
    })
}

/// Fits [`NoisyHomodyneModel`] and reports its fixed seed noise.
pub fn fit_noisy_homodyne(
    data: &LandscapeData,
    epsilon: f64,
    bounds: &FitBounds,
    options: &FitOptions,
) -> Result<FitResult> {
    bounds.validate()?;
    let model = NoisyHomodyneModel::new(epsilon, bounds);
    let mut fit = fit_model(&model, data, options)?;
    fit.n_in = model.n_in;
    fit.n_b_prime = model.n_in - 0.5;
    Ok(fit)
}

/// Cost of a fitted model at each `delta_phi`, for overlay plots.
pub fn fitted_curve(
    fit: &FitResult,
    epsilon: f64,
    bounds: &FitBounds,
    delta_phi: &[f64],
) -> Result<Vec<f64>> {
    let model: Box<dyn CostModel> = match fit.model.as_str() {
        "noisy-seed" => Box::new(NoisySeedModel {
            epsilon,
            bounds: *bounds,
        }),
        "noisy-homodyne" => Box::new(NoisyHomodyneModel::new(epsilon, bounds)),
        other => return Err(invalid("model", format!("unknown model `{other}`"))),
    };
    let theta = model
        .parameter_names()
        .iter()
        .map(|n| {
            fit.parameters
                .get(*n)
                .copied()
                .ok_or_else(|| invalid("parameters", format!("fit lacks `{n}`")))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(delta_phi
        .iter()
        .map(|&d| model.cost(&theta, fit.r, d))
        .collect())
}

/// `2k + n (1 + ln 2 pi + ln(rss / n))`.
pub fn aic(k: usize, n: usize, rss: f64) -> Result<f64> {
    if n < 1 {
        return Err(invalid("n", "need at least one data point"));
    }
    if !(rss > 0.0) || !rss.is_finite() {
        return Err(invalid("rss", format!("{rss} must be positive")));
    }
    let n = n as f64;
    Ok(2.0 * k as f64 + n * (1.0 + (2.0 * PI).ln() + (rss / n).ln()))
}

/// AIC difference at and above which a model is significantly less
/// supported.
pub const SIGNIFICANT_DELTA_AIC: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedModel {
    pub model: String,
    pub aic: f64,
    pub delta_aic: f64,
    pub significantly_less_supported: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    /// Ascending AIC.
    pub ranking: Vec<RankedModel>,
    pub selected: String,
    /// The two best models have equal AIC.
    pub tie: bool,
}

pub fn compare_models(fits: &[FitResult]) -> Result<ModelComparison> {
    if fits.len() < 2 {
        return Err(invalid("fits", "need at least two fits"));
    }
    if fits.iter().any(|f| f.data_digest != fits[0].data_digest) {
        return Err(Error::MismatchedData);
    }
    let mut order: Vec<&FitResult> = fits.iter().collect();
    order.sort_by(|a, b| a.aic.total_cmp(&b.aic));
    let best = order[0].aic;
    let ranking: Vec<RankedModel> = order
        .iter()
        .map(|f| {
            let delta = f.aic - best;
            RankedModel {
                model: f.model.clone(),
                aic: f.aic,
                delta_aic: delta,
                significantly_less_supported: delta >= SIGNIFICANT_DELTA_AIC,
            }
        })
        .collect();
    Ok(ModelComparison {
        selected: ranking[0].model.clone(),
        tie: ranking[1].delta_aic == 0.0,
        ranking,
    })
}
