//! Study configuration. Every table rejects unknown keys.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use qcalab_core::estimation::{FitBounds, FitOptions};
use qcalab_core::{ModelParams, NoiseConfig, QcaConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub landscape: LandscapeSection,
    #[serde(default)]
    pub learning: LearningSection,
    #[serde(default)]
    pub qca: QcaSection,
    #[serde(default)]
    pub precision: PrecisionSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub ingest: IngestSection,
    #[serde(default)]
    pub verify: VerifySection,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}

/// Model parameters apart from the squeezing, which studies sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub epsilon: f64,
    pub epsilon_prime: f64,
    pub n_b: f64,
    pub n_b_prime: f64,
    pub phi_0: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            epsilon_prime: 1.0,
            n_b: 0.0,
            n_b_prime: 0.0,
            phi_0: 0.0,
        }
    }
}

impl ModelSpec {
    pub fn at(&self, r: f64) -> ModelParams {
        ModelParams::new(r, self.epsilon, self.epsilon_prime, self.n_b_prime)
            .with_n_b(self.n_b)
            .with_phases(self.phi_0, self.phi_0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            start: -PI,
            stop: PI,
            points: 121,
        }
    }
}

impl GridSection {
    pub fn values(&self) -> CliResult<Vec<f64>> {
        if self.points == 0 {
            return Err(CliError::config("grid: points must be at least 1"));
        }
        if !(self.start.is_finite() && self.stop.is_finite())
            || (self.points > 1 && self.stop <= self.start)
        {
            return Err(CliError::config(format!(
                "grid: need finite start < stop, got [{}, {}]",
                self.start, self.stop
            )));
        }
        Ok(qcalab_core::landscape::linspace(
            self.start,
            self.stop,
            self.points,
        ))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LandscapeSection {
    pub model: ModelSpec,
    pub r: Vec<f64>,
    pub grid: GridSection,
    pub mc: bool,
    pub samples: usize,
    pub noise: NoiseConfig,
}

impl Default for LandscapeSection {
    fn default() -> Self {
        Self {
            model: ModelSpec::default(),
            r: vec![0.01, 0.4, 1.5, 2.5],
            grid: GridSection::default(),
            mc: false,
            samples: 100_000,
            noise: NoiseConfig::default(),
        }
    }
}

/// Learning settings shared by `qca` and `precision`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearningSection {
    pub model: ModelSpec,
    pub initial_delta_phi: f64,
    pub eta_initial: f64,
    pub eta_post_factor: f64,
    pub max_iterations: usize,
    pub fd_step: f64,
    pub samples_per_iteration: usize,
    pub convergence_sigma_multiple: f64,
    pub calibration_windows: usize,
    pub failure_dphi_rad: Option<f64>,
    pub noise: NoiseConfig,
}

impl Default for LearningSection {
    fn default() -> Self {
        let base = QcaConfig::desk(ModelParams::ideal(0.74));
        Self {
            model: ModelSpec::default(),
            initial_delta_phi: 3.0,
            eta_initial: base.eta_initial,
            eta_post_factor: base.eta_post_factor,
            max_iterations: base.max_iterations,
            fd_step: base.fd_step,
            samples_per_iteration: base.samples_per_iteration,
            convergence_sigma_multiple: base.convergence_sigma_multiple,
            calibration_windows: base.calibration_windows,
            failure_dphi_rad: None,
            noise: base.noise,
        }
    }
}

impl LearningSection {
    pub fn config(&self, r: f64, seed: u64) -> QcaConfig {
        QcaConfig {
            model: self.model.at(r).with_delta_phi(self.initial_delta_phi),
            eta_initial: self.eta_initial,
            eta_post_factor: self.eta_post_factor,
            max_iterations: self.max_iterations,
            fd_step: self.fd_step,
            samples_per_iteration: self.samples_per_iteration,
            convergence_sigma_multiple: self.convergence_sigma_multiple,
            seed,
            noise: self.noise,
            calibration_windows: self.calibration_windows,
            failure_dphi_rad: self.failure_dphi_rad,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenarios {
    /// One run from `learning.initial_delta_phi`.
    Single,
    /// Three initial control phases at fixed target, then three targets at
    /// fixed control phase.
    Robustness,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QcaSection {
    pub r: f64,
    pub scenarios: Scenarios,
    /// Squeezing schedule for an adaptive run; ignored when empty.
    pub schedule: Vec<f64>,
}

impl Default for QcaSection {
    fn default() -> Self {
        Self {
            r: 0.74,
            scenarios: Scenarios::Single,
            schedule: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrecisionSection {
    pub r: Vec<f64>,
    pub runs: usize,
}

impl Default for PrecisionSection {
    fn default() -> Self {
        Self {
            r: vec![0.18, 0.35, 0.74],
            runs: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub epsilon: f64,
    /// Row of the apparatus bounds table; `bounds` overrides it.
    pub bounds_row: usize,
    pub bounds: Option<FitBounds>,
    pub options: FitOptions,
    pub models: Vec<String>,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            epsilon: 0.77,
            bounds_row: 2,
            bounds: None,
            options: FitOptions::default(),
            models: vec!["noisy-seed".into(), "noisy-homodyne".into()],
        }
    }
}

impl FitSection {
    pub fn resolved_bounds(&self) -> CliResult<FitBounds> {
        let b = match self.bounds {
            Some(b) => b,
            None => FitBounds::table(self.bounds_row)?,
        };
        b.validate()?;
        Ok(b)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestSection {
    pub bins: usize,
}

impl Default for IngestSection {
    fn default() -> Self {
        Self { bins: 128 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    None,
    /// Flip the sign of the off-diagonal form entry before comparing
    /// against the lattice oracle.
    A12SignFlip,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub points: usize,
    pub mutation: Mutation,
    /// Relative tolerance of the Monte Carlo variance checks.
    pub mc_tolerance: f64,
    pub samples: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            points: 20,
            mutation: Mutation::None,
            mc_tolerance: 0.02,
            samples: 200_000,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(
            ExperimentConfig::parse("").unwrap(),
            ExperimentConfig::default()
        );
    }

    #[test]
    fn unknown_keys_rejected_at_every_level() {
        for text in [
            "sed = 1",
            "[landscape]\nrr = [1.0]",
            "[landscape.model]\nepsilon = 0.5\nfoo = 1",
            "[learning.noise]\ngain = 1.0",
            "[fit.options]\nstart = 3",
            "[verify]\nmutation = \"a21-sign-flip\"",
        ] {
            assert!(ExperimentConfig::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn error_names_the_line() {
        let err = ExperimentConfig::parse("seed = 1\n[qca]\nr = \"high\"\n").unwrap_err();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn empty_grid_rejected() {
        let g = GridSection {
            points: 0,
            ..GridSection::default()
        };
        assert!(matches!(g.values(), Err(CliError::Config(_))));
    }

    #[test]
    fn learning_defaults_match_desk_preset() {
        let c = LearningSection::default().config(0.74, 3);
        let mut want = QcaConfig::desk(ModelParams::ideal(0.74)).with_seed(3);
        want.model.phi_c = 3.0;
        assert_eq!(c, want);
    }
}
