use std::f64::consts::PI;
use std::path::Path;

use qcalab_core::estimation::{
    compare_models, fit_cost_model, fit_noisy_homodyne, fitted_curve, FitResult, LandscapeData,
};
use qcalab_core::homodyne::{process_trace_direct, process_trace_histogram};
use qcalab_core::landscape::{dip_fwhm, landscape_sweep, landscape_sweep_mc};
use qcalab_core::qca::{
    adaptive_run, derive_seed, precision_stats, qca_run, run_many, PrecisionStats,
};
use qcalab_core::{CostEstimate, CostEvaluator, QcaConfig, QcaRunRecord};
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Scenarios};
use crate::error::{CliError, CliResult};
use crate::output::{r_tag, OutputDir};
use crate::traceio::read_trace;

/// Validated work for one verb; nothing is written until `execute`.
pub trait Plan {
    fn execute(&self, out: &mut OutputDir) -> CliResult<Value>;
}

fn check_r(values: &[f64]) -> CliResult<()> {
    if values.is_empty() {
        return Err(CliError::config("r list is empty"));
    }
    if let Some(r) = values.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
        return Err(CliError::config(format!("r = {r} must be finite and >= 0")));
    }
    Ok(())
}

pub struct LandscapePlan {
    cfg: ExperimentConfig,
    grid: Vec<f64>,
    evaluator: Option<CostEvaluator>,
}

impl LandscapePlan {
    pub fn new(cfg: &ExperimentConfig) -> CliResult<Self> {
        let s = &cfg.landscape;
        check_r(&s.r)?;
        let grid = s.grid.values()?;
        for &r in &s.r {
            s.model.at(r).validate()?;
        }
        let evaluator = if s.mc {
            Some(CostEvaluator::new(s.samples, s.noise)?)
        } else {
            None
        };
        Ok(Self {
            cfg: cfg.clone(),
            grid,
            evaluator,
        })
    }
}

impl Plan for LandscapePlan {
    fn execute(&self, out: &mut OutputDir) -> CliResult<Value> {
        let s = &self.cfg.landscape;
        let mut rows = Vec::new();
        for (i, &r) in s.r.iter().enumerate() {
            let p = s.model.at(r);
            let table = landscape_sweep(&p, &self.grid)?;
            out.write(
                &format!("landscape_r{}.csv", r_tag(r)),
                table.to_csv().as_bytes(),
            )?;
            let dip = dip_fwhm(&table.delta_phi(), &table.costs()).ok();
            let min_cost = table.costs().into_iter().fold(f64::INFINITY, f64::min);
            let mut row = json!({ "r": r, "min_cost": min_cost, "fwhm_rad": dip.map(|d| d.1) });
            if let Some(ev) = &self.evaluator {
                let mc =
                    landscape_sweep_mc(&p, &self.grid, ev, derive_seed(self.cfg.seed, i as u64))?;
                out.write(
                    &format!("landscape_mc_r{}.csv", r_tag(r)),
                    mc.to_csv().as_bytes(),
                )?;
                row["mc_min_cost"] = json!(mc.costs().into_iter().fold(f64::INFINITY, f64::min));
            }
            rows.push(row);
        }
        Ok(json!({ "landscapes": rows }))
    }
}

pub struct QcaPlan {
    runs: Vec<(f64, f64, QcaConfig)>,
    schedule: Vec<f64>,
}

impl QcaPlan {
    pub fn new(cfg: &ExperimentConfig) -> CliResult<Self> {
        let q = &cfg.qca;
        check_r(&[q.r])?;
        let schedule = q.schedule.clone();
        if !schedule.is_empty() {
            check_r(&schedule)?;
            if schedule.windows(2).any(|w| w[1] <= w[0]) {
                return Err(CliError::config("qca.schedule must be strictly increasing"));
            }
        }
        let phi_0 = cfg.learning.model.phi_0;
        let phases: Vec<(f64, f64)> = match q.scenarios {
            Scenarios::Single => vec![(phi_0, phi_0 + cfg.learning.initial_delta_phi)],
            Scenarios::Robustness => [PI, 0.78 * PI, 0.55 * PI]
                .iter()
                .map(|&c| (phi_0, c))
                .chain([0.0, 0.33 * PI, 0.49 * PI].iter().map(|&t| (t, PI)))
                .collect(),
        };
        let first_r = schedule.first().copied().unwrap_or(q.r);
        let runs = phases
            .into_iter()
            .enumerate()
            .map(|(k, (phi_0, phi_c))| {
                let mut c = cfg
                    .learning
                    .config(first_r, derive_seed(cfg.seed, k as u64));
                c.model = c.model.with_phases(phi_0, phi_c);
                c.validate()?;
                Ok((phi_0, phi_c, c))
            })
            .collect::<CliResult<Vec<_>>>()?;
        Ok(Self { runs, schedule })
    }
}

fn write_run(out: &mut OutputDir, name: &str, rec: &QcaRunRecord) -> CliResult<()> {
    out.write(&format!("{name}.csv"), rec.to_csv().as_bytes())?;
    out.write_json(&format!("{name}.json"), &rec.summary())
}

impl Plan for QcaPlan {
    fn execute(&self, out: &mut OutputDir) -> CliResult<Value> {
        let mut results = Vec::new();
        for (k, (phi_0, phi_c, c)) in self.runs.iter().enumerate() {
            let name = format!("qca_run{k}");
            let mut entry =
                json!({ "run": k, "phi_0": phi_0, "phi_c_initial": phi_c, "seed": c.seed });
            if self.schedule.is_empty() {
                let rec = qca_run(c)?;
                write_run(out, &name, &rec)?;
                entry["summary"] = json!(rec.summary());
                entry["convergence_sigma"] = json!(rec.convergence_sigma);
            } else {
                match adaptive_run(c, &self.schedule) {
                    Ok(a) => {
                        for (j, rec) in a.stages.iter().enumerate() {
                            write_run(out, &format!("{name}_stage{j}"), rec)?;
                        }
                        entry["summary"] = json!(a.final_record().summary());
                    }
                    Err(qcalab_core::Error::StageFailed { stage, partial }) => {
                        for (j, rec) in partial.iter().enumerate() {
                            write_run(out, &format!("{name}_stage{j}"), rec)?;
                        }
                        entry["failed_stage"] = json!(stage);
                        entry["summary"] = json!(partial.last().map(|r| r.summary()));
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            results.push(entry);
        }
        let converged = results
            .iter()
            .filter(|e| e["summary"]["converged"] == json!(true))
            .count();
        Ok(json!({ "runs": results, "converged": converged, "schedule": self.schedule }))
    }
}

pub struct PrecisionPlan {
    cfg: ExperimentConfig,
    seeds: Vec<u64>,
}

impl PrecisionPlan {
    pub fn new(cfg: &ExperimentConfig) -> CliResult<Self> {
        let p = &cfg.precision;
        check_r(&p.r)?;
        if p.runs < 2 {
            return Err(CliError::config(format!(
                "precision.runs = {} must be at least 2",
                p.runs
            )));
        }
        for &r in &p.r {
            cfg.learning.config(r, cfg.seed).validate()?;
        }
        Ok(Self {
            cfg: cfg.clone(),
            seeds: (0..p.runs as u64)
                .map(|j| derive_seed(cfg.seed, j))
                .collect(),
        })
    }
}

impl Plan for PrecisionPlan {
    fn execute(&self, out: &mut OutputDir) -> CliResult<Value> {
        let mut r_values = self.cfg.precision.r.clone();
        r_values.sort_by(f64::total_cmp);
        r_values.dedup();
        let mut table = String::from(PrecisionStats::CSV_HEADER);
        table.push('\n');
        let mut runs_csv = String::from("r,seed,converged,t_opt,post_convergence_mean_dphi_rad\n");
        let mut stats = Vec::new();
        for &r in &r_values {
            let runs = run_many(&self.cfg.learning.config(r, 0), &self.seeds)?;
            for (rec, seed) in runs.iter().zip(&self.seeds) {
                runs_csv.push_str(&format!(
                    "{r},{seed},{},{},{}\n",
                    rec.converged(),
                    rec.t_opt.map_or(String::new(), |t| t.to_string()),
                    rec.post_convergence_mean_dphi
                        .map_or(String::new(), |m| format!("{m:.17e}"))
                ));
            }
            let s = precision_stats(r, &runs, &self.seeds)?;
            table.push_str(&s.csv_row());
            table.push('\n');
            stats.push(s);
        }
        out.write("precision.csv", table.as_bytes())?;
        out.write("precision_runs.csv", runs_csv.as_bytes())?;
        let (lo, hi) = (&stats[0], &stats[stats.len() - 1]);
        let speedup = match (lo.t_opt_median, hi.t_opt_median) {
            (Some(a), Some(b)) if stats.len() > 1 && b > 0.0 => Some(a / b),
            _ => None,
        };
        let precision_ratio =
            (stats.len() > 1 && hi.std_of_means > 0.0).then(|| lo.std_of_means / hi.std_of_means);
        Ok(json!({
            "rows": stats.iter().map(|s| json!({
                "r": s.r,
                "n_runs": s.n_runs,
                "t_opt_median": s.t_opt_median,
                "mean_dphi_mrad": s.mean_of_means * 1e3,
                "sigma_dphi_mrad": s.std_of_means * 1e3,
                "excluded_seeds": s.excluded_seeds,
            })).collect::<Vec<_>>(),
            "speedup": speedup,
            "precision_ratio": precision_ratio,
        }))
    }
}

/// Reads `delta_phi_rad, cost[, cost_stderr]`; other columns are ignored.
pub fn read_landscape_csv(path: &Path) -> CliResult<LandscapeData> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(i_phi), Some(i_cost)) = (col("delta_phi_rad"), col("cost")) else {
        return Err(CliError::config(format!(
            "{}: header must name delta_phi_rad and cost",
            path.display()
        )));
    };
    let i_err = col("cost_stderr");
    let (mut phi, mut cost, mut err) = (Vec::new(), Vec::new(), Vec::new());
    for (k, rec) in reader.records().enumerate() {
        // header is line 1
        let line = k + 2;
        let rec =
            rec.map_err(|e| CliError::config(format!("{} row {line}: {e}", path.display())))?;
        let field = |i: usize, name: &str| -> CliResult<f64> {
            rec.get(i)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| {
                    CliError::config(format!(
                        "{} row {line}: bad {name} `{}`",
                        path.display(),
                        rec.get(i).unwrap_or("")
                    ))
                })
        };
        phi.push(field(i_phi, "delta_phi_rad")?);
        cost.push(field(i_cost, "cost")?);
        if let Some(i) = i_err {
            err.push(field(i, "cost_stderr")?);
        }
    }
    Ok(LandscapeData::new(phi, cost, i_err.map(|_| err))?)
}

pub struct FitPlan {
    cfg: ExperimentConfig,
    data: LandscapeData,
}

impl FitPlan {
    pub fn new(cfg: &ExperimentConfig, input: &Path) -> CliResult<Self> {
        let f = &cfg.fit;
        if f.models.is_empty() {
            return Err(CliError::config("fit.models is empty"));
        }
        if let Some(m) = f
            .models
            .iter()
            .find(|m| !matches!(m.as_str(), "noisy-seed" | "noisy-homodyne"))
        {
            return Err(CliError::config(format!("unknown model `{m}`")));
        }
        f.resolved_bounds()?;
        if !(f.options.fwhm_fraction > 0.0 && f.options.fwhm_fraction < 1.0)
            || f.options.starts == 0
        {
            return Err(CliError::config(
                "fit.options: need starts >= 1 and 0 < fwhm_fraction < 1",
            ));
        }
        let data = read_landscape_csv(input)?;
        if f.options.weighted && data.cost_stderr.is_none() {
            return Err(CliError::config("weighted fit needs a cost_stderr column"));
        }
        Ok(Self {
            cfg: cfg.clone(),
            data,
        })
    }
}

impl Plan for FitPlan {
    fn execute(&self, out: &mut OutputDir) -> CliResult<Value> {
        let f = &self.cfg.fit;
        let bounds = f.resolved_bounds()?;
        let mut fits: Vec<FitResult> = Vec::new();
        for m in &f.models {
            let fit = match m.as_str() {
                "noisy-seed" => fit_cost_model(&self.data, f.epsilon, &bounds, &f.options)?,
                _ => fit_noisy_homodyne(&self.data, f.epsilon, &bounds, &f.options)?,
            };
            let curve = fitted_curve(&fit, f.epsilon, &bounds, &self.data.delta_phi)?;
            let mut csv = String::from("delta_phi_rad,cost,cost_fit\n");
            for ((d, c), m) in self.data.delta_phi.iter().zip(&self.data.cost).zip(&curve) {
                csv.push_str(&format!("{d:.17e},{c:.17e},{m:.17e}\n"));
            }
            out.write_json(&format!("fit_{}.json", fit.model), &fit)?;
            out.write(&format!("fit_curve_{}.csv", fit.model), csv.as_bytes())?;
            fits.push(fit);
        }
        let comparison = if fits.len() > 1 {
            let c = compare_models(&fits)?;
            out.write_json("comparison.json", &c)?;
            Some(c)
        } else {
            None
        };
        Ok(json!({ "fits": fits, "comparison": comparison }))
    }
}

pub struct IngestPlan {
    trace: qcalab_core::HomodyneTrace,
    bins: usize,
}

impl IngestPlan {
    pub fn new(cfg: &ExperimentConfig, trace: &Path, sidecar: Option<&Path>) -> CliResult<Self> {
        if cfg.ingest.bins < 16 {
            return Err(CliError::config(format!(
                "ingest.bins = {} below 16",
                cfg.ingest.bins
            )));
        }
        Ok(Self {
            trace: read_trace(trace, sidecar)?,
            bins: cfg.ingest.bins,
        })
    }
}

impl Plan for IngestPlan {
    fn execute(&self, out: &mut OutputDir) -> CliResult<Value> {
        let d = process_trace_direct(&self.trace)?;
        let h = process_trace_histogram(&self.trace, self.bins)?;
        let agreement = (d.cost - h.cost).abs() / d.stderr.hypot(h.stderr);
        let csv = format!(
            "{}\n{}\n{}\n",
            CostEstimate::CSV_HEADER,
            d.csv_row(),
            h.csv_row()
        );
        out.write("ingest.csv", csv.as_bytes())?;
        Ok(json!({
            "n_samples": self.trace.samples.len(),
            "direct": d,
            "histogram": h,
            "agreement_sigma": agreement,
            "agree_within_3_sigma": agreement <= 3.0,
        }))
    }
}
