//! Shared fixtures for the criterion benchmarks.

use qcalab_core::ModelParams;

/// Lossy, noisy operating point used across benches.
pub fn lossy_point() -> ModelParams {
    ModelParams::new(0.74, 0.77, 0.6, 0.4).with_delta_phi(0.3)
}
