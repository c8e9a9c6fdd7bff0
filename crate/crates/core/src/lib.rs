//! Gaussian-state model, cost landscapes, homodyne simulation, variational
//! phase learning and parameter estimation for two-mode squeezed light.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimation;
pub mod gaussian;
pub mod homodyne;
pub mod landscape;
mod numeric;
pub mod params;
pub mod qca;
pub mod wigner;

pub use error::{Error, Result};
pub use estimation::{FitBounds, FitOptions, FitResult, LandscapeData};
pub use gaussian::{CovarianceMatrix, QuadraticForm2};
pub use homodyne::{CostEstimate, CostEvaluator, HomodyneTrace, NoiseConfig};
pub use landscape::{LandscapeRow, LandscapeTable, SeededParams};
pub use params::{wrap_phase, ModelParams};
pub use qca::{QcaConfig, QcaRunRecord};
pub use wigner::GridSpec;
