use std::f64::consts::PI;

use qcalab_core::homodyne::EvaluatorKind;
use qcalab_core::qca::{
    adaptive_run, derive_seed, precision_study, qca_run, run_many, time_to_solution_study,
    PrecisionStats,
};
use qcalab_core::{ModelParams, QcaConfig};

fn preset(r: f64) -> QcaConfig {
    QcaConfig::desk(ModelParams::new(r, 0.77, 0.2, 0.21))
}

/// Two-sample Kolmogorov-Smirnov statistic.
fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

fn ks_critical_5pct(n: usize, m: usize) -> f64 {
    1.358 * ((n + m) as f64 / (n * m) as f64).sqrt()
}

fn converged_abs_dphi(phases: &[(f64, f64)], seed_base: u64) -> Vec<f64> {
    let mut out = Vec::new();
    for (k, &(phi_0, phi_c)) in phases.iter().enumerate() {
        let mut cfg = preset(0.74);
        cfg.model = cfg.model.with_phases(phi_0, phi_c);
        let seeds: Vec<u64> = (0..12)
            .map(|i| derive_seed(seed_base + k as u64, i))
            .collect();
        for run in run_many(&cfg, &seeds).unwrap() {
            out.push(
                run.post_convergence_mean_dphi
                    .expect("scenario run converged")
                    .abs(),
            );
        }
    }
    out
}

#[test]
fn converged_phase_is_independent_of_initialization() {
    let control_group = converged_abs_dphi(&[(0.0, PI), (0.0, 0.78 * PI), (0.0, 0.55 * PI)], 10);
    let target_group = converged_abs_dphi(&[(0.0, PI), (0.33 * PI, PI), (0.49 * PI, PI)], 20);
    let d = ks_statistic(&control_group, &target_group);
    let crit = ks_critical_5pct(control_group.len(), target_group.len());
    assert!(d < crit, "KS D = {d:.3}, critical {crit:.3}");
}

#[test]
fn studies_are_deterministic() {
    let seeds = [3, 5, 8];
    let a = run_many(&preset(0.35), &seeds).unwrap();
    let b = run_many(&preset(0.35), &seeds).unwrap();
    assert_eq!(a, b);
    assert_eq!(a[0].to_csv(), b[0].to_csv());
    assert_ne!(a[0], a[1]);
}

#[test]
fn eta_drops_after_convergence() {
    let cfg = preset(0.74).with_seed(4);
    let run = qca_run(&cfg).unwrap();
    let k = run.convergence_index.unwrap();
    assert_eq!(run.t_opt, Some(k));
    for it in &run.iterations {
        let want = if it.iteration <= k {
            cfg.eta_initial
        } else {
            cfg.eta_initial / cfg.eta_post_factor
        };
        assert_eq!(it.eta, want, "iteration {}", it.iteration);
    }
    assert!(run.iterations.len() <= cfg.max_iterations);
}

#[test]
fn precision_table_has_expected_columns() {
    let seeds: Vec<u64> = (0..6).collect();
    let stats = precision_study(&preset(0.74), &seeds).unwrap();
    assert_eq!(
        PrecisionStats::CSV_HEADER,
        "r,t_opt_median,mean_dphi_mrad,sigma_dphi_mrad"
    );
    assert_eq!(stats.csv_row().split(',').count(), 4);
    let rms = (stats.per_run_means.iter().map(|m| m * m).sum::<f64>() / stats.n_runs as f64).sqrt();
    assert_eq!(stats.std_of_means, rms);
    assert!(stats.excluded_seeds.is_empty());
}

#[test]
fn noiseless_time_to_solution_shrinks_with_squeezing() {
    let mut cfg = preset(0.18);
    cfg.noise.kind = EvaluatorKind::Analytic;
    let tts = time_to_solution_study(&cfg, &[0.74, 0.18, 0.35], &[0]).unwrap();
    let t: Vec<f64> = tts.rows.iter().map(|r| r.t_opt_median.unwrap()).collect();
    assert_eq!(
        tts.rows.iter().map(|r| r.r).collect::<Vec<_>>(),
        vec![0.18, 0.35, 0.74]
    );
    assert!(t[0] > t[1] && t[1] > t[2], "{t:?}");
    assert!(tts.speedup.unwrap() > 1.0);
}

#[test]
fn three_stage_schedule_matches_direct_precision() {
    let seeds: Vec<u64> = (100..120).collect();
    let direct: Vec<f64> = run_many(&preset(0.74), &seeds)
        .unwrap()
        .iter()
        .map(|r| r.post_convergence_mean_dphi.unwrap())
        .collect();
    let adaptive: Vec<f64> = seeds
        .iter()
        .map(|&s| {
            let run = adaptive_run(&preset(0.18).with_seed(s), &[0.18, 0.35, 0.74]).unwrap();
            assert_eq!(run.stages.len(), 3);
            run.final_record().post_convergence_mean_dphi.unwrap()
        })
        .collect();
    let rms = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    let ratio = rms(&adaptive) / rms(&direct);
    // two-sided 1% F bounds on the variance ratio, 20 and 20 degrees of freedom
    assert!((0.55..=1.82).contains(&ratio), "sigma ratio {ratio}");
}
