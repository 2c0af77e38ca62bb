use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rayon::ThreadPoolBuilder;
use subcm::dipole::{impedance_matrix, C0};
use subcm::scenes::{random_cloud, CloudSpec};
use subcm::solver::{frequency_grid, run_sweep, Problem, SolveOptions, Solver};

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    vec![
        ("sequential", ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
        ("parallel", ThreadPoolBuilder::new().build().unwrap()),
    ]
}

fn impedance(c: &mut Criterion) {
    let scene = random_cloud(&CloudSpec { n_dipoles: 300, ka: 6.0, seed: 1, ..Default::default() }).unwrap();
    let mut g = c.benchmark_group("impedance_matrix_300");
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| impedance_matrix(&scene, 1.0).unwrap()))
        });
    }
    g.finish();
}

fn sweep(c: &mut Criterion) {
    let scene = random_cloud(&CloudSpec { n_dipoles: 20, ka: 1.5, seed: 2, ..Default::default() }).unwrap();
    let problem = Problem { scene, sphere: None };
    let f0 = C0 / (2.0 * std::f64::consts::PI);
    let freqs = frequency_grid(0.8 * f0, 1.2 * f0, 8).unwrap();
    let opts = SolveOptions { cross_check: false, ..Default::default() };
    let mut g = c.benchmark_group("dense_sweep_8");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| run_sweep(&problem, Solver::DenseScattering, &freqs, &opts).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, impedance, sweep);
criterion_main!(benches);
