use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Physical parameters of the seeded two-mode squeezed resource.
///
/// Mode 1 is the conjugate (transmissivity `epsilon`, seed noise `n_b`),
/// mode 2 is the probe (`epsilon_prime`, `n_b_prime`). Phases in radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub r: f64,
    pub epsilon: f64,
    pub epsilon_prime: f64,
    #[serde(default)]
    pub n_b: f64,
    pub n_b_prime: f64,
    #[serde(default)]
    pub phi_0: f64,
    #[serde(default)]
    pub phi_c: f64,
}

impl ModelParams {
    pub fn new(r: f64, epsilon: f64, epsilon_prime: f64, n_b_prime: f64) -> Self {
        Self {
            r,
            epsilon,
            epsilon_prime,
            n_b: 0.0,
            n_b_prime,
            phi_0: 0.0,
            phi_c: 0.0,
        }
    }

    /// Lossless, noiseless squeezed vacuum.
    pub fn ideal(r: f64) -> Self {
        Self::new(r, 1.0, 1.0, 0.0)
    }

    pub fn vacuum() -> Self {
        Self::ideal(0.0)
    }

    /// Sets `phi_c = phi_0 + delta_phi`.
    pub fn with_delta_phi(mut self, delta_phi: f64) -> Self {
        self.phi_c = self.phi_0 + delta_phi;
        self
    }

    pub fn with_phases(mut self, phi_0: f64, phi_c: f64) -> Self {
        self.phi_0 = phi_0;
        self.phi_c = phi_c;
        self
    }

    pub fn with_r(mut self, r: f64) -> Self {
        self.r = r;
        self
    }

    pub fn with_n_b(mut self, n_b: f64) -> Self {
        self.n_b = n_b;
        self
    }

    /// Mean photon number per mode of the unseeded squeezer, `sinh^2 r`.
    pub fn n(&self) -> f64 {
        self.r.sinh().powi(2)
    }

    /// Control minus target phase, reduced to (-pi, pi].
    pub fn delta_phi(&self) -> f64 {
        wrap_phase(self.phi_c - self.phi_0)
    }

    /// Probe seed noise including shot noise, `n_b_prime + 1/2`.
    pub fn n_in(&self) -> f64 {
        self.n_b_prime + 0.5
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("r", self.r),
            ("epsilon", self.epsilon),
            ("epsilon_prime", self.epsilon_prime),
            ("n_b", self.n_b),
            ("n_b_prime", self.n_b_prime),
            ("phi_0", self.phi_0),
            ("phi_c", self.phi_c),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(invalid(name, format!("{v} is not finite")));
            }
        }
        if self.r < 0.0 {
            return Err(invalid("r", format!("{} < 0", self.r)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(invalid(
                "epsilon",
                format!("{} outside [0, 1]", self.epsilon),
            ));
        }
        if !(0.0..=1.0).contains(&self.epsilon_prime) {
            return Err(invalid(
                "epsilon_prime",
                format!("{} outside [0, 1]", self.epsilon_prime),
            ));
        }
        if self.n_b < 0.0 {
            return Err(invalid("n_b", format!("{} < 0", self.n_b)));
        }
        if self.n_b_prime < 0.0 {
            return Err(invalid("n_b_prime", format!("{} < 0", self.n_b_prime)));
        }
        Ok(())
    }
}

/// Reduces an angle to (-pi, pi].
pub fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else {
        y
    }
}
