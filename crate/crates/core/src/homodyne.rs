//! Homodyne sampling, voltage-trace synthesis and the two calibration
//! pipelines that turn a trace into a cost estimate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gaussian::{diff_quadrature_variance, variance_unchecked};
use crate::landscape::cost_from_variance;
use crate::numeric::{levenberg_marquardt, LmOptions};
use crate::params::ModelParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceSource {
    Simulated,
    Ingested,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub source: TraceSource,
    pub seed: Option<u64>,
    pub gain_m: f64,
}

/// Voltage differences with their shot-noise and electronic-noise
/// calibration, both in volts squared.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomodyneTrace {
    pub samples: Vec<f64>,
    pub sigma_snl_sq: f64,
    pub sigma_e_sq: f64,
    pub meta: TraceMeta,
}

impl HomodyneTrace {
    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(invalid("samples", "trace is empty"));
        }
        if self.samples.iter().any(|v| !v.is_finite()) {
            return Err(invalid("samples", "non-finite sample"));
        }
        if !(self.sigma_e_sq >= 0.0) || !self.sigma_e_sq.is_finite() {
            return Err(invalid(
                "sigma_e_sq",
                format!("{} must be >= 0", self.sigma_e_sq),
            ));
        }
        if !(self.sigma_snl_sq > self.sigma_e_sq) || !self.sigma_snl_sq.is_finite() {
            return Err(invalid(
                "sigma_snl_sq",
                format!(
                    "{} must exceed sigma_e_sq = {}",
                    self.sigma_snl_sq, self.sigma_e_sq
                ),
            ));
        }
        Ok(())
    }

    fn shot_scale(&self) -> f64 {
        self.sigma_snl_sq - self.sigma_e_sq
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    HistogramFit,
    DirectVariance,
    /// Direct-variance estimate drawn from its exact sampling distribution.
    DirectChiSquare,
    Analytic,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::HistogramFit => "histogram-fit",
            Method::DirectVariance => "direct-variance",
            Method::DirectChiSquare => "direct-chi-square",
            Method::Analytic => "analytic",
        }
    }
}

/// One measured cost with the difference-quadrature variance behind it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub method: Method,
    pub n_samples: usize,
    pub variance: f64,
    pub cost: f64,
    pub stderr: f64,
}

impl CostEstimate {
    fn from_variance(method: Method, n_samples: usize, variance: f64, var_stderr: f64) -> Self {
        let cost = cost_from_variance(variance);
        Self {
            method,
            n_samples,
            variance,
            cost,
            // dC/dV = -C / (2V)
            stderr: cost.abs() / (2.0 * variance) * var_stderr,
        }
    }

    pub const CSV_HEADER: &'static str = "method,n_samples,variance,cost,stderr";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.17e},{:.17e},{:.17e}",
            self.method.as_str(),
            self.n_samples,
            self.variance,
            self.cost,
            self.stderr
        )
    }
}

fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// I.i.d. draws of `X-` from the zero-mean marginal of `params`.
pub fn sample_diff_quadrature(params: &ModelParams, n: usize, seed: u64) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(invalid("n", format!("{n} < 2")));
    }
    let v = diff_quadrature_variance(params)?;
    Ok(draw_normal(v.sqrt(), n, &mut rng_from(seed)))
}

fn draw_normal<R: Rng + ?Sized>(sd: f64, n: usize, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sd * z
        })
        .collect()
}

/// `v = m sqrt2 X- + offset + e`, `e ~ N(0, sigma_e_sq)`; attaches
/// `sigma_snl_sq = m^2 + sigma_e_sq`.
pub fn synthesize_voltage_trace(
    x_samples: &[f64],
    gain_m: f64,
    mean_offset: f64,
    sigma_e_sq: f64,
    seed: u64,
) -> Result<HomodyneTrace> {
    let mut trace = synthesize_with(
        x_samples,
        gain_m,
        mean_offset,
        sigma_e_sq,
        &mut rng_from(seed),
    )?;
    trace.meta.seed = Some(seed);
    Ok(trace)
}

fn synthesize_with<R: Rng + ?Sized>(
    x_samples: &[f64],
    gain_m: f64,
    mean_offset: f64,
    sigma_e_sq: f64,
    rng: &mut R,
) -> Result<HomodyneTrace> {
    if !(gain_m > 0.0) || !gain_m.is_finite() {
        return Err(invalid("gain_m", format!("{gain_m} must be positive")));
    }
    if !(sigma_e_sq >= 0.0) || !sigma_e_sq.is_finite() {
        return Err(invalid("sigma_e_sq", format!("{sigma_e_sq} must be >= 0")));
    }
    if !mean_offset.is_finite() {
        return Err(invalid("mean_offset", "not finite"));
    }
    let k = gain_m * std::f64::consts::SQRT_2;
    let se = sigma_e_sq.sqrt();
    let samples = x_samples
        .iter()
        .map(|&x| {
            let e: f64 = if se > 0.0 {
                se * Distribution::<f64>::sample(&StandardNormal, rng)
            } else {
                0.0
            };
            k * x + mean_offset + e
        })
        .collect();
    Ok(HomodyneTrace {
        samples,
        sigma_snl_sq: gain_m * gain_m + sigma_e_sq,
        sigma_e_sq,
        meta: TraceMeta {
            source: TraceSource::Simulated,
            seed: None,
            gain_m,
        },
    })
}

fn mean_and_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, ss / (n - 1.0))
}

/// Variance of the mean-subtracted trace, corrected for electronic noise and
/// scaled by the shot-noise calibration. Makes no distributional assumption.
pub fn process_trace_direct(trace: &HomodyneTrace) -> Result<CostEstimate> {
    trace.validate()?;
    let n = trace.samples.len();
    if n < 2 {
        return Err(invalid("samples", "need at least 2 samples"));
    }
    let (_, sd2) = mean_and_variance(&trace.samples);
    direct_estimate(
        Method::DirectVariance,
        n,
        sd2,
        trace.sigma_e_sq,
        trace.shot_scale(),
    )
}

fn direct_estimate(
    method: Method,
    n: usize,
    sigma_d_sq: f64,
    sigma_e_sq: f64,
    shot_scale: f64,
) -> Result<CostEstimate> {
    let sigma_sq = (sigma_d_sq - sigma_e_sq) / shot_scale;
    if !(sigma_sq > 0.0) {
        return Err(Error::NonPositiveVariance(sigma_sq));
    }
    let var_stderr = sigma_d_sq * (2.0 / (n as f64 - 1.0)).sqrt() / shot_scale / 2.0;
    Ok(CostEstimate::from_variance(
        method,
        n,
        sigma_sq / 2.0,
        var_stderr,
    ))
}

/// Histogram of the shot-noise-scaled trace fitted to a normal profile.
///
/// Bins span six sample standard deviations either side of the mean; the fit
/// weights each bin by its Poisson uncertainty `sqrt(count)`.
pub fn process_trace_histogram(trace: &HomodyneTrace, bins: usize) -> Result<CostEstimate> {
    trace.validate()?;
    if bins < 16 {
        return Err(invalid("bins", format!("{bins} < 16")));
    }
    let n = trace.samples.len();
    if n < 2 {
        return Err(invalid("samples", "need at least 2 samples"));
    }
    let scale = trace.shot_scale().sqrt();
    let (mean, var) = mean_and_variance(&trace.samples);
    let s = var.sqrt() / scale;
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::DegenerateFit("trace has zero variance".into()));
    }
    let half = 6.0 * s;
    let width = 2.0 * half / bins as f64;
    let mut counts = vec![0.0f64; bins];
    for &v in &trace.samples {
        let x = (v - mean) / scale;
        let b = ((x + half) / width).floor();
        if b >= 0.0 && (b as usize) < bins {
            counts[b as usize] += 1.0;
        }
    }
    let centers: Vec<f64> = (0..bins)
        .map(|i| -half + (i as f64 + 0.5) * width)
        .collect();
    let weights: Vec<f64> = counts.iter().map(|&c| 1.0 / c.max(1.0).sqrt()).collect();
    let peak = counts.iter().copied().fold(0.0, f64::max);
    let model = |p: &[f64], out: &mut [f64]| {
        let (amp, mu, sd) = (p[0], p[1], p[2]);
        if !(sd > 0.0) {
            return false;
        }
        for i in 0..bins {
            let z = (centers[i] - mu) / sd;
            out[i] = (amp * (-0.5 * z * z).exp() - counts[i]) * weights[i];
        }
        true
    };
    let fit = levenberg_marquardt(
        model,
        &[peak, 0.0, s],
        &[0.0, -half, 1e-6 * s],
        &[10.0 * peak + 10.0, half, 10.0 * s],
        bins,
        LmOptions::default(),
    )
    .ok_or_else(|| Error::DegenerateFit("histogram fit rejected its start point".into()))?;
    let sd_fit = fit.x[2];
    if !fit.converged || !(sd_fit > 0.0) {
        return Err(Error::DegenerateFit(
            "histogram fit did not converge".into(),
        ));
    }
    // binning widens the fitted profile by width^2 / 12 (Sheppard)
    let sigma_sd_sq = sd_fit * sd_fit - width * width / 12.0;
    let sigma_sq = sigma_sd_sq - trace.sigma_e_sq / trace.shot_scale();
    if !(sigma_sq > 0.0) {
        return Err(Error::NonPositiveVariance(sigma_sq));
    }
    let cov_sd = fit
        .jtj
        .clone()
        .try_inverse()
        .map(|c| c[(2, 2)].max(0.0).sqrt())
        .ok_or_else(|| Error::DegenerateFit("singular fit curvature".into()))?;
    // se(sigma^2) = 2 sigma se(sigma), and V = sigma^2 / 2
    let var_stderr = sd_fit * cov_sd;
    Ok(CostEstimate::from_variance(
        Method::HistogramFit,
        n,
        sigma_sq / 2.0,
        var_stderr,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvaluatorKind {
    /// Noise-free closed form.
    Analytic,
    /// Direct-variance estimate sampled from its chi-square law.
    Fast,
    /// Full trace synthesis and processing.
    Homodyne,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    Direct,
    Histogram,
}

/// Detection chain settings for simulated measurements.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub kind: EvaluatorKind,
    pub gain_m: f64,
    pub sigma_e_sq: f64,
    pub mean_offset: f64,
    pub pipeline: Pipeline,
    pub bins: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            kind: EvaluatorKind::Fast,
            gain_m: 1.0,
            sigma_e_sq: 0.0,
            mean_offset: 0.0,
            pipeline: Pipeline::Direct,
            bins: 128,
        }
    }
}

/// One measurement window of `n_samples` homodyne samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostEvaluator {
    pub n_samples: usize,
    pub noise: NoiseConfig,
}

impl CostEvaluator {
    pub fn new(n_samples: usize, noise: NoiseConfig) -> Result<Self> {
        if n_samples < 1000 {
            return Err(invalid("n_samples", format!("{n_samples} < 1000")));
        }
        if !(noise.gain_m > 0.0) {
            return Err(invalid(
                "gain_m",
                format!("{} must be positive", noise.gain_m),
            ));
        }
        if !(noise.sigma_e_sq >= 0.0) {
            return Err(invalid(
                "sigma_e_sq",
                format!("{} must be >= 0", noise.sigma_e_sq),
            ));
        }
        Ok(Self { n_samples, noise })
    }

    pub fn analytic() -> Self {
        Self {
            n_samples: 100_000,
            noise: NoiseConfig {
                kind: EvaluatorKind::Analytic,
                ..NoiseConfig::default()
            },
        }
    }

    pub fn is_noiseless(&self) -> bool {
        self.noise.kind == EvaluatorKind::Analytic
    }

    /// Large-sample standard error of the direct estimator at `params`.
    pub fn nominal_stderr(&self, params: &ModelParams) -> Result<f64> {
        let v = diff_quadrature_variance(params)?;
        let m2 = self.noise.gain_m * self.noise.gain_m;
        let sd2 = 2.0 * m2 * v + self.noise.sigma_e_sq;
        let var_stderr = sd2 * (2.0 / (self.n_samples as f64 - 1.0)).sqrt() / m2 / 2.0;
        Ok(cost_from_variance(v).abs() / (2.0 * v) * var_stderr)
    }

    pub fn evaluate<R: Rng + ?Sized>(
        &self,
        params: &ModelParams,
        rng: &mut R,
    ) -> Result<CostEstimate> {
        params.validate()?;
        let v = variance_unchecked(params);
        let n = self.n_samples;
        let m2 = self.noise.gain_m * self.noise.gain_m;
        match self.noise.kind {
            EvaluatorKind::Analytic => Ok(CostEstimate {
                method: Method::Analytic,
                n_samples: n,
                variance: v,
                cost: cost_from_variance(v),
                stderr: 0.0,
            }),
            EvaluatorKind::Fast => {
                let chi = ChiSquared::new((n - 1) as f64).expect("n >= 1000");
                let sd2 = (2.0 * m2 * v + self.noise.sigma_e_sq) * chi.sample(rng) / (n - 1) as f64;
                direct_estimate(Method::DirectChiSquare, n, sd2, self.noise.sigma_e_sq, m2)
            }
            EvaluatorKind::Homodyne => {
                let x = draw_normal(v.sqrt(), n, rng);
                let trace = synthesize_with(
                    &x,
                    self.noise.gain_m,
                    self.noise.mean_offset,
                    self.noise.sigma_e_sq,
                    rng,
                )?;
                match self.noise.pipeline {
                    Pipeline::Direct => process_trace_direct(&trace),
                    Pipeline::Histogram => process_trace_histogram(&trace, self.noise.bins),
                }
            }
        }
    }
}

/// A single seeded measurement of the cost at `params`.
pub fn cost_evaluator(
    params: &ModelParams,
    n_samples: usize,
    noise: &NoiseConfig,
    seed: u64,
) -> Result<CostEstimate> {
    CostEvaluator::new(n_samples, *noise)?.evaluate(params, &mut rng_from(seed))
}
