//! Variational phase learning: gradient descent of the control phase against
//! noisy cost windows, with convergence detection and multi-run studies.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::homodyne::{CostEstimate, CostEvaluator, NoiseConfig};
use crate::landscape::cost;
use crate::numeric::median;
use crate::params::{wrap_phase, ModelParams};

/// Settings of one learning run. `model.phi_c` is the initial control phase
/// and `model.phi_0` the hidden target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QcaConfig {
    pub model: ModelParams,
    pub eta_initial: f64,
    #[serde(default = "defaults::eta_post_factor")]
    pub eta_post_factor: f64,
    #[serde(default = "defaults::max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "defaults::fd_step")]
    pub fd_step: f64,
    #[serde(default = "defaults::samples")]
    pub samples_per_iteration: usize,
    #[serde(default = "defaults::sigma_multiple")]
    pub convergence_sigma_multiple: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise: NoiseConfig,
    /// Cost windows at the minimum used to calibrate the convergence band.
    #[serde(default = "defaults::calibration_windows")]
    pub calibration_windows: usize,
    /// When set, an unconverged run only counts as failed if its final
    /// `|delta_phi|` exceeds this.
    #[serde(default)]
    pub failure_dphi_rad: Option<f64>,
}

mod defaults {
    pub fn eta_post_factor() -> f64 {
        10.0
    }
    pub fn max_iterations() -> usize {
        550
    }
    pub fn fd_step() -> f64 {
        0.01
    }
    pub fn samples() -> usize {
        100_000
    }
    pub fn sigma_multiple() -> f64 {
        1.0
    }
    pub fn calibration_windows() -> usize {
        32
    }
}

impl QcaConfig {
    /// Desk-scale defaults: 550 iterations from `delta_phi = 3 rad`,
    /// `10^5` samples per window, learning rate 1 reduced tenfold after
    /// convergence.
    pub fn desk(model: ModelParams) -> Self {
        Self {
            model: model.with_delta_phi(3.0),
            eta_initial: 1.0,
            eta_post_factor: defaults::eta_post_factor(),
            max_iterations: defaults::max_iterations(),
            fd_step: defaults::fd_step(),
            samples_per_iteration: defaults::samples(),
            convergence_sigma_multiple: defaults::sigma_multiple(),
            seed: 0,
            noise: NoiseConfig::default(),
            calibration_windows: defaults::calibration_windows(),
            failure_dphi_rad: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_r(mut self, r: f64) -> Self {
        self.model.r = r;
        self
    }

    /// Sets the initial control phase to `phi_0 + delta_phi`.
    pub fn with_initial_delta_phi(mut self, delta_phi: f64) -> Self {
        self.model = self.model.with_delta_phi(delta_phi);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.eta_initial > 0.0) || !self.eta_initial.is_finite() {
            return Err(invalid(
                "eta_initial",
                format!("{} must be positive", self.eta_initial),
            ));
        }
        if !(self.eta_post_factor > 0.0) || !self.eta_post_factor.is_finite() {
            return Err(invalid(
                "eta_post_factor",
                format!("{} must be positive", self.eta_post_factor),
            ));
        }
        if !(self.fd_step > 0.0) || !self.fd_step.is_finite() {
            return Err(invalid(
                "fd_step",
                format!("{} must be positive", self.fd_step),
            ));
        }
        if self.max_iterations < 1 {
            return Err(invalid("max_iterations", "must be at least 1"));
        }
        if !(self.convergence_sigma_multiple >= 0.0) {
            return Err(invalid("convergence_sigma_multiple", "must be >= 0"));
        }
        if self.calibration_windows < 2 {
            return Err(invalid("calibration_windows", "must be at least 2"));
        }
        self.evaluator().map(|_| ())
    }

    pub fn evaluator(&self) -> Result<CostEvaluator> {
        CostEvaluator::new(self.samples_per_iteration, self.noise)
    }
}

/// Central difference with its propagated standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    pub value: f64,
    pub stderr: f64,
}

/// `(C(phi_c + h) - C(phi_c - h)) / 2h` from two fresh windows.
pub fn estimate_gradient<R: Rng + ?Sized>(
    evaluator: &CostEvaluator,
    model: &ModelParams,
    phi_c: f64,
    fd_step: f64,
    rng: &mut R,
) -> Result<GradientEstimate> {
    if !(fd_step > 0.0) {
        return Err(invalid("fd_step", format!("{fd_step} must be positive")));
    }
    let mut at = *model;
    at.phi_c = phi_c + fd_step;
    let plus = evaluator.evaluate(&at, rng)?;
    at.phi_c = phi_c - fd_step;
    let minus = evaluator.evaluate(&at, rng)?;
    Ok(GradientEstimate {
        value: (plus.cost - minus.cost) / (2.0 * fd_step),
        stderr: plus.stderr.hypot(minus.stderr) / (2.0 * fd_step),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Control phase at which the window was measured (unwrapped).
    pub phi_c: f64,
    pub delta_phi: f64,
    pub cost: f64,
    pub cost_stderr: f64,
    pub gradient: f64,
    /// Learning rate used for the update that follows this window.
    pub eta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QcaRunRecord {
    pub iterations: Vec<IterationRecord>,
    pub convergence_index: Option<usize>,
    pub t_opt: Option<usize>,
    /// Mean wrapped `delta_phi` over the positions reached after convergence.
    pub post_convergence_mean_dphi: Option<f64>,
    /// Mean unwrapped control phase over the same positions.
    pub post_convergence_mean_phi_c: Option<f64>,
    pub final_phi_c: f64,
    pub final_delta_phi: f64,
    pub failed_to_train: bool,
    pub theoretical_min_cost: f64,
    pub convergence_sigma: f64,
}

impl QcaRunRecord {
    pub fn converged(&self) -> bool {
        self.convergence_index.is_some()
    }

    pub const CSV_HEADER: &'static str =
        "iteration,phi_c_rad,delta_phi_rad,cost,cost_stderr,gradient,eta";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for it in &self.iterations {
            let _ = writeln!(
                s,
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                it.iteration, it.phi_c, it.delta_phi, it.cost, it.cost_stderr, it.gradient, it.eta
            );
        }
        s
    }

    /// Run-level summary `{converged, t_opt, post_convergence_mean_dphi,
    /// failed_to_train}`.
    pub fn summary(&self) -> RunSummary {
        RunSummary {
            converged: self.converged(),
            t_opt: self.t_opt,
            post_convergence_mean_dphi: self.post_convergence_mean_dphi,
            failed_to_train: self.failed_to_train,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub converged: bool,
    pub t_opt: Option<usize>,
    pub post_convergence_mean_dphi: Option<f64>,
    pub failed_to_train: bool,
}

/// First index whose cost is at or below `theoretical_min + multiple * sigma`.
///
/// No debounce: a single crossing counts.
pub fn detect_convergence(
    costs: &[f64],
    theoretical_min: f64,
    sigma: f64,
    multiple: f64,
) -> Option<usize> {
    let threshold = theoretical_min + multiple * sigma;
    costs.iter().position(|&c| c <= threshold)
}

fn sample_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Width of the convergence band: the spread of the cost estimator at the
/// analytic minimum, or its large-sample standard error when noiseless.
pub fn convergence_sigma(config: &QcaConfig) -> Result<f64> {
    let evaluator = config.evaluator()?;
    let at_min = config.model.with_delta_phi(0.0);
    if evaluator.is_noiseless() {
        return evaluator.nominal_stderr(&at_min);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let costs = (0..config.calibration_windows)
        .map(|_| evaluator.evaluate(&at_min, &mut rng).map(|e| e.cost))
        .collect::<Result<Vec<_>>>()?;
    Ok(sample_std(&costs))
}

fn partial_record(
    iterations: Vec<IterationRecord>,
    phi_c: f64,
    phi_0: f64,
    c_min: f64,
    sigma: f64,
) -> QcaRunRecord {
    QcaRunRecord {
        iterations,
        convergence_index: None,
        t_opt: None,
        post_convergence_mean_dphi: None,
        post_convergence_mean_phi_c: None,
        final_phi_c: phi_c,
        final_delta_phi: wrap_phase(phi_c - phi_0),
        failed_to_train: true,
        theoretical_min_cost: c_min,
        convergence_sigma: sigma,
    }
}

/// One learning run of `config.max_iterations` iterations.
///
/// Each iteration measures the cost at the current control phase and a
/// central-difference gradient, then steps `phi_c -= eta * gradient`. The
/// first window at or below the convergence band fixes `t_opt`; from the
/// following iteration the rate is `eta_initial / eta_post_factor`.
pub fn qca_run(config: &QcaConfig) -> Result<QcaRunRecord> {
    config.validate()?;
    let evaluator = config.evaluator()?;
    let phi_0 = config.model.phi_0;
    let c_min = cost(&config.model.with_delta_phi(0.0))?;
    let sigma = convergence_sigma(config)?;
    let threshold = c_min + config.convergence_sigma_multiple * sigma;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut phi_c = config.model.phi_c;
    let mut eta = config.eta_initial;
    let mut conv: Option<usize> = None;
    let mut post = (0.0, 0.0, 0usize);
    let mut iterations = Vec::with_capacity(config.max_iterations);
    for k in 0..config.max_iterations {
        let mut at = config.model;
        at.phi_c = phi_c;
        let step = evaluator
            .evaluate(&at, &mut rng)
            .and_then(|c: CostEstimate| {
                estimate_gradient(&evaluator, &config.model, phi_c, config.fd_step, &mut rng)
                    .map(|g| (c, g))
            });
        let (c, g) = match step {
            Ok(v) => v,
            Err(e) => {
                return Err(Error::EvaluatorFailed {
                    iteration: k,
                    source: Box::new(e),
                    partial: Box::new(partial_record(iterations, phi_c, phi_0, c_min, sigma)),
                })
            }
        };
        iterations.push(IterationRecord {
            iteration: k,
            phi_c,
            delta_phi: wrap_phase(phi_c - phi_0),
            cost: c.cost,
            cost_stderr: c.stderr,
            gradient: g.value,
            eta,
        });
        if conv.is_none() && c.cost <= threshold {
            conv = Some(k);
        }
        phi_c -= eta * g.value;
        if conv.is_some() {
            post.0 += wrap_phase(phi_c - phi_0);
            post.1 += phi_c;
            post.2 += 1;
            eta = config.eta_initial / config.eta_post_factor;
        }
    }
    let final_delta_phi = wrap_phase(phi_c - phi_0);
    let failed = conv.is_none()
        && config
            .failure_dphi_rad
            .is_none_or(|t| final_delta_phi.abs() > t);
    let count = post.2 as f64;
    Ok(QcaRunRecord {
        iterations,
        convergence_index: conv,
        t_opt: conv,
        post_convergence_mean_dphi: conv.map(|_| post.0 / count),
        post_convergence_mean_phi_c: conv.map(|_| post.1 / count),
        final_phi_c: phi_c,
        final_delta_phi,
        failed_to_train: failed,
        theoretical_min_cost: c_min,
        convergence_sigma: sigma,
    })
}

/// Decorrelated child seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Statistics of post-convergence phase means over repeated runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionStats {
    pub r: f64,
    /// Number of converged runs entering the statistics.
    pub n_runs: usize,
    pub mean_of_means: f64,
    /// `sqrt(mean of squared per-run means)`.
    pub std_of_means: f64,
    pub per_run_means: Vec<f64>,
    pub t_opt_median: Option<f64>,
    pub t_opts: Vec<Option<usize>>,
    /// Seeds of runs that did not converge and were left out.
    pub excluded_seeds: Vec<u64>,
}

impl PrecisionStats {
    pub const CSV_HEADER: &'static str = "r,t_opt_median,mean_dphi_mrad,sigma_dphi_mrad";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.6}",
            self.r,
            self.t_opt_median
                .map_or("NaN".to_string(), |t| format!("{t}")),
            self.mean_of_means * 1e3,
            self.std_of_means * 1e3
        )
    }

    /// Standard error of `mean_of_means`.
    pub fn standard_error(&self) -> f64 {
        self.std_of_means / (self.n_runs as f64).sqrt()
    }
}

/// Runs one learning run per seed.
pub fn run_many(config: &QcaConfig, seeds: &[u64]) -> Result<Vec<QcaRunRecord>> {
    seeds
        .par_iter()
        .map(|&s| qca_run(&config.clone().with_seed(s)))
        .collect()
}

fn median_t_opt(t: &[Option<usize>]) -> Option<f64> {
    let v: Vec<f64> = t
        .iter()
        .map(|t| t.map_or(f64::INFINITY, |t| t as f64))
        .collect();
    median(&v).filter(|m| m.is_finite())
}

pub fn precision_stats(r: f64, runs: &[QcaRunRecord], seeds: &[u64]) -> Result<PrecisionStats> {
    let means: Vec<f64> = runs
        .iter()
        .filter_map(|r| r.post_convergence_mean_dphi)
        .collect();
    if means.is_empty() {
        return Err(Error::AllRunsFailed(runs.len()));
    }
    let n = means.len() as f64;
    let t_opts: Vec<Option<usize>> = runs.iter().map(|r| r.t_opt).collect();
    Ok(PrecisionStats {
        r,
        n_runs: means.len(),
        mean_of_means: means.iter().sum::<f64>() / n,
        std_of_means: (means.iter().map(|m| m * m).sum::<f64>() / n).sqrt(),
        t_opt_median: median_t_opt(&t_opts),
        t_opts,
        per_run_means: means,
        excluded_seeds: runs
            .iter()
            .zip(seeds)
            .filter(|(r, _)| !r.converged())
            .map(|(_, &s)| s)
            .collect(),
    })
}

/// Repeats [`qca_run`] once per seed and summarizes the post-convergence
/// means. Unconverged runs are excluded and listed.
pub fn precision_study(config: &QcaConfig, seeds: &[u64]) -> Result<PrecisionStats> {
    if seeds.len() < 2 {
        return Err(invalid("seeds", "need at least 2 runs"));
    }
    let runs = run_many(config, seeds)?;
    precision_stats(config.model.r, &runs, seeds)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeToSolutionRow {
    pub r: f64,
    /// Median over seeds; unconverged runs count as never converging.
    pub t_opt_median: Option<f64>,
    pub converged: usize,
    pub runs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeToSolution {
    pub rows: Vec<TimeToSolutionRow>,
    /// `t_opt(r_min) / t_opt(r_max)`.
    pub speedup: Option<f64>,
}

pub fn time_to_solution_study(
    template: &QcaConfig,
    r_values: &[f64],
    seeds: &[u64],
) -> Result<TimeToSolution> {
    let mut distinct = r_values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(invalid("r_values", "need at least 2 distinct values"));
    }
    if seeds.is_empty() {
        return Err(invalid("seeds", "empty"));
    }
    let rows = distinct
        .iter()
        .map(|&r| {
            let runs = run_many(&template.clone().with_r(r), seeds)?;
            let t: Vec<Option<usize>> = runs.iter().map(|x| x.t_opt).collect();
            Ok(TimeToSolutionRow {
                r,
                t_opt_median: median_t_opt(&t),
                converged: t.iter().flatten().count(),
                runs: t.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let speedup = match (rows[0].t_opt_median, rows[rows.len() - 1].t_opt_median) {
        (Some(a), Some(b)) if b > 0.0 => Some(a / b),
        _ => None,
    };
    Ok(TimeToSolution { rows, speedup })
}

/// Initial phase difference of each probe trial.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum InitPolicy {
    Fixed {
        delta_phi: f64,
    },
    /// Uniform on (-pi, pi], drawn from its own seeded stream.
    Uniform {
        seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrenPlateauReport {
    pub r: f64,
    pub n_trials: usize,
    pub converged: usize,
    pub failures: usize,
    pub failure_fraction: f64,
    /// Ten times the spread of post-convergence means among converged runs.
    pub failure_threshold: Option<f64>,
}

/// Initial phase differences for `n` trials under `policy`.
pub fn initial_phases(policy: InitPolicy, n: usize) -> Vec<f64> {
    match policy {
        InitPolicy::Fixed { delta_phi } => vec![delta_phi; n],
        InitPolicy::Uniform { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n)
                .map(|_| wrap_phase(rng.random_range(-PI..PI)))
                .collect()
        }
    }
}

/// Fraction of runs that fail to train.
///
/// A run fails when it never converges and its final `|delta_phi|` exceeds
/// ten times the spread `sqrt(mean of squared post-convergence means)` of
/// the converged runs. With fewer than two converged runs the spread is
/// undefined and every unconverged run fails.
pub fn barren_plateau_probe(
    config: &QcaConfig,
    n_trials: usize,
    init: InitPolicy,
) -> Result<BarrenPlateauReport> {
    if n_trials < 10 {
        return Err(invalid("n_trials", format!("{n_trials} < 10")));
    }
    let phases = initial_phases(init, n_trials);
    let runs = phases
        .par_iter()
        .enumerate()
        .map(|(i, &d)| {
            let c = config
                .clone()
                .with_initial_delta_phi(d)
                .with_seed(derive_seed(config.seed, i as u64));
            qca_run(&c)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(classify_failures(config.model.r, &runs))
}

pub fn classify_failures(r: f64, runs: &[QcaRunRecord]) -> BarrenPlateauReport {
    let means: Vec<f64> = runs
        .iter()
        .filter_map(|x| x.post_convergence_mean_dphi)
        .collect();
    let threshold = (means.len() >= 2)
        .then(|| 10.0 * (means.iter().map(|d| d * d).sum::<f64>() / means.len() as f64).sqrt());
    let failures = runs
        .iter()
        .filter(|x| !x.converged() && threshold.is_none_or(|t| x.final_delta_phi.abs() > t))
        .count();
    BarrenPlateauReport {
        r,
        n_trials: runs.len(),
        converged: means.len(),
        failures,
        failure_fraction: failures as f64 / runs.len() as f64,
        failure_threshold: threshold,
    }
}

/// Stage records of a squeezing schedule; the last stage holds the result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveRun {
    pub schedule: Vec<f64>,
    pub stages: Vec<QcaRunRecord>,
}

impl AdaptiveRun {
    pub fn final_record(&self) -> &QcaRunRecord {
        self.stages.last().expect("at least one stage")
    }
}

/// Runs [`qca_run`] at each squeezing level in turn, starting every stage
/// from the previous stage's post-convergence mean control phase.
///
/// The first stage uses `config.seed`; later stages derive their own.
pub fn adaptive_run(config: &QcaConfig, schedule: &[f64]) -> Result<AdaptiveRun> {
    if schedule.is_empty() {
        return Err(invalid("schedule", "empty"));
    }
    if schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("schedule", "must be strictly increasing"));
    }
    let mut stages = Vec::with_capacity(schedule.len());
    let mut phi_c = config.model.phi_c;
    for (i, &r) in schedule.iter().enumerate() {
        let mut c = config.clone().with_r(r);
        c.model.phi_c = phi_c;
        if i > 0 {
            c.seed = derive_seed(config.seed, i as u64);
        }
        let rec = qca_run(&c)?;
        match rec.post_convergence_mean_phi_c {
            Some(p) => phi_c = p,
            None => {
                stages.push(rec);
                return Err(Error::StageFailed {
                    stage: i,
                    partial: Box::new(stages),
                });
            }
        }
        stages.push(rec);
    }
    Ok(AdaptiveRun {
        schedule: schedule.to_vec(),
        stages,
    })
}
