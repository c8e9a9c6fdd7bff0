use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use qcalab_bench::lossy_point;
use qcalab_core::estimation::{fit_cost_model, FitBounds, FitOptions, LandscapeData};
use qcalab_core::gaussian::{diff_quadrature_variance, tmss_covariance};
use qcalab_core::homodyne::{
    process_trace_direct, process_trace_histogram, sample_diff_quadrature, synthesize_voltage_trace,
};
use qcalab_core::landscape::{cost, cost_gradient, landscape_sweep, linspace};
use qcalab_core::qca::qca_run;
use qcalab_core::wigner::wigner_marginal_oracle;
use qcalab_core::{GridSpec, QcaConfig};

fn model(c: &mut Criterion) {
    let p = lossy_point();
    c.bench_function("cost", |b| b.iter(|| cost(black_box(&p))));
    c.bench_function("cost_gradient", |b| b.iter(|| cost_gradient(black_box(&p))));
    c.bench_function("covariance", |b| b.iter(|| tmss_covariance(black_box(&p))));
    c.bench_function("variance", |b| {
        b.iter(|| diff_quadrature_variance(black_box(&p)))
    });
    let grid = linspace(-3.0, 3.0, 121);
    c.bench_function("landscape_121", |b| {
        b.iter(|| landscape_sweep(black_box(&p), &grid))
    });
    let spec = GridSpec::default();
    c.bench_function("lattice_oracle", |b| {
        b.iter(|| wigner_marginal_oracle(black_box(0.1), &p, &spec))
    });
}

fn pipelines(c: &mut Criterion) {
    let p = lossy_point();
    let x = sample_diff_quadrature(&p, 100_000, 1).unwrap();
    let trace = synthesize_voltage_trace(&x, 0.8, 0.3, 0.05, 2).unwrap();
    c.bench_function("synthesize_100k", |b| {
        b.iter(|| synthesize_voltage_trace(black_box(&x), 0.8, 0.3, 0.05, 2))
    });
    c.bench_function("direct_100k", |b| {
        b.iter(|| process_trace_direct(black_box(&trace)))
    });
    c.bench_function("histogram_100k", |b| {
        b.iter(|| process_trace_histogram(black_box(&trace), 128))
    });
}

fn learning(c: &mut Criterion) {
    let config = QcaConfig::desk(lossy_point()).with_seed(3);
    let mut g = c.benchmark_group("slow");
    g.sample_size(10);
    g.bench_function("qca_run", |b| b.iter(|| qca_run(black_box(&config))));
    let grid = linspace(-3.0, 3.0, 61);
    let data = LandscapeData::from_table(&landscape_sweep(&lossy_point(), &grid).unwrap()).unwrap();
    let bounds = FitBounds::table(2).unwrap();
    let options = FitOptions::default();
    g.bench_function("fit_noisy_seed", |b| {
        b.iter(|| fit_cost_model(black_box(&data), 0.77, &bounds, &options))
    });
    g.finish();
}

criterion_group!(benches, model, pipelines, learning);
criterion_main!(benches);
