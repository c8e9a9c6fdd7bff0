//! Self-checks of the model against independent routes.

use std::f64::consts::PI;

use qcalab_core::estimation::solve_r;
use qcalab_core::gaussian::{
    diff_quadrature_variance, homodyne_quadratic_form, marginal_from_form,
};
use qcalab_core::homodyne::{
    process_trace_direct, process_trace_histogram, sample_diff_quadrature, synthesize_voltage_trace,
};
use qcalab_core::landscape::{
    cost, cost_gradient, normalized_cost, quadratic_coefficient_f, seeded_cost,
};
use qcalab_core::qca::derive_seed;
use qcalab_core::wigner::wigner_marginal_oracle;
use qcalab_core::{GridSpec, ModelParams, SeededParams};
use serde::Serialize;
use serde_json::{json, Value};

use crate::commands::Plan;
use crate::config::{ExperimentConfig, Mutation, VerifySection};
use crate::error::{CliError, CliResult};
use crate::output::OutputDir;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub check: &'static str,
    pub case: String,
    pub error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn check(name: &'static str, case: String, error: f64, tolerance: f64) -> Check {
    Check {
        check: name,
        case,
        error,
        tolerance,
        // NaN fails
        pass: error <= tolerance,
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Deterministic spread of lossy, thermally seeded points.
fn sample_point(i: usize, n: usize) -> (ModelParams, f64) {
    let t = (i as f64 + 0.5) / n as f64;
    let frac = |k: f64| (t * k).fract();
    let p = ModelParams::new(
        0.05 + 1.45 * t,
        0.3 + 0.7 * frac(3.7),
        0.3 + 0.7 * frac(5.3),
        1.5 * frac(2.9),
    )
    .with_delta_phi(PI * (2.0 * frac(7.1) - 1.0));
    (p, 2.0 * frac(1.9) - 1.0)
}

pub struct VerifyPlan {
    seed: u64,
    v: VerifySection,
}

impl VerifyPlan {
    pub fn new(cfg: &ExperimentConfig) -> CliResult<Self> {
        let v = cfg.verify.clone();
        if v.points == 0 {
            return Err(CliError::config("verify.points must be at least 1"));
        }
        if v.mc_tolerance.is_nan() || v.mc_tolerance <= 0.0 {
            return Err(CliError::config("verify.mc_tolerance must be positive"));
        }
        if v.samples < 1000 {
            return Err(CliError::config(format!(
                "verify.samples = {} below 1000",
                v.samples
            )));
        }
        Ok(Self { seed: cfg.seed, v })
    }

    pub fn checks(&self) -> CliResult<Vec<Check>> {
        let v = &self.v;
        let mut out = Vec::new();
        let grid = GridSpec::default();
        for i in 0..v.points {
            let (p, x) = sample_point(i, v.points);
            let mut form = homodyne_quadratic_form(&p)?;
            if v.mutation == Mutation::A12SignFlip {
                form.a[0][1] = -form.a[0][1];
                form.a[1][0] = -form.a[1][0];
            }
            let closed = marginal_from_form(x, &form);
            let lattice = wigner_marginal_oracle(x, &p, &grid)?;
            out.push(check(
                "oracle",
                format!("point {i}"),
                rel(closed, lattice),
                1e-6,
            ));

            let h = 1e-5;
            let fd = (cost(&p.with_delta_phi(p.delta_phi() + h))?
                - cost(&p.with_delta_phi(p.delta_phi() - h))?)
                / (2.0 * h);
            let g = cost_gradient(&p)?;
            out.push(check(
                "gradient",
                format!("point {i}"),
                (g - fd).abs() / g.abs().max(1e-3),
                1e-6,
            ));
        }

        let h = 1e-3;
        for n in [0.03f64, 0.1, 0.5, 1.0] {
            let p = ModelParams::ideal(n.sqrt().asinh());
            let c = |d: f64| normalized_cost(&p.with_delta_phi(d));
            let second = (c(h)? - 2.0 * c(0.0)? + c(-h)?) / (h * h);
            out.push(check(
                "curvature",
                format!("N={n}"),
                rel(second, quadratic_coefficient_f(n)?),
                1e-4,
            ));
        }

        let h = 1e-2;
        for alpha in [0.1, 0.5] {
            let c = seeded_cost(&SeededParams {
                r: 0.0,
                alpha,
                phi_0: 0.0,
                phi_c: h,
            })?;
            out.push(check(
                "quartic",
                format!("alpha={alpha}"),
                rel((c + 1.0) / h.powi(4), alpha * alpha / 2.0),
                1e-3,
            ));
        }

        for (r, e, ep, n_in) in [
            (0.18, 0.77, 0.6, 0.9),
            (0.35, 0.9, 0.8, 0.5),
            (0.74, 0.5, 0.95, 1.2),
        ] {
            let var = diff_quadrature_variance(&ModelParams::new(r, e, ep, n_in - 0.5))?;
            out.push(check(
                "solve-r",
                format!("r={r}"),
                (solve_r(e, ep, n_in, var)? - r).abs(),
                1e-8,
            ));
        }

        for (k, r) in [0.18, 0.35, 0.74].into_iter().enumerate() {
            let p = ModelParams::new(r, 0.77, 0.2, 0.21);
            let truth = diff_quadrature_variance(&p)?;
            let x = sample_diff_quadrature(&p, v.samples, derive_seed(self.seed, 2 * k as u64))?;
            let trace = synthesize_voltage_trace(
                &x,
                0.8,
                0.3,
                0.05,
                derive_seed(self.seed, 2 * k as u64 + 1),
            )?;
            let d = process_trace_direct(&trace)?;
            let hst = process_trace_histogram(&trace, 128)?;
            out.push(check(
                "mc-direct",
                format!("r={r}"),
                rel(d.variance, truth),
                v.mc_tolerance,
            ));
            out.push(check(
                "mc-histogram",
                format!("r={r}"),
                rel(hst.variance, truth),
                v.mc_tolerance,
            ));
            out.push(check(
                "mc-agreement",
                format!("r={r}"),
                (d.cost - hst.cost).abs() / d.stderr.hypot(hst.stderr),
                3.0,
            ));
        }
        Ok(out)
    }
}

impl Plan for VerifyPlan {
    fn execute(&self, out: &mut OutputDir) -> CliResult<Value> {
        let checks = self.checks()?;
        let mut csv = String::from("check,case,error,tolerance,pass\n");
        for c in &checks {
            csv.push_str(&format!(
                "{},{},{:.6e},{:e},{}\n",
                c.check, c.case, c.error, c.tolerance, c.pass
            ));
        }
        out.write("verify.csv", csv.as_bytes())?;
        let failed = checks.iter().filter(|c| !c.pass).count();
        Ok(json!({
            "total": checks.len(),
            "failed": failed,
            "mutation": self.v.mutation,
            "failures": checks.iter().filter(|c| !c.pass).collect::<Vec<_>>(),
        }))
    }
}
