use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rhf_pt::deg_pt::{expand_degenerate, BlockFrame, DegOptions, ThetaSolver};
use rhf_pt::nondeg_pt::{expand, NondegOptions};
use rhf_pt::validation::ring_ground_state;

// One-thread pool against the global pool. Without the `parallel` feature
// both arms run the sequential fallback.
fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    vec![
        ("sequential", rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
        ("parallel", rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()),
    ]
}

fn nondeg_series(c: &mut Criterion) {
    let (sys, gs) = ring_ground_state(32, 5).unwrap();
    let w = sys.random_potential(&mut ChaCha8Rng::seed_from_u64(1), 1.0);
    let mut group = c.benchmark_group("nondeg_expand_order3");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| expand(&gs, &w, 3, &NondegOptions::default()).unwrap()))
        });
    }
    group.finish();
}

fn theta_assembly(c: &mut Criterion) {
    let (_, gs) = ring_ground_state(32, 6).unwrap();
    let frame = BlockFrame::from_ground_state(&gs).unwrap();
    let mut group = c.benchmark_group("theta_dense_assembly");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| ThetaSolver::new(&frame).unwrap()))
        });
    }
    group.finish();
}

fn deg_series(c: &mut Criterion) {
    let (sys, gs) = ring_ground_state(16, 2).unwrap();
    let w = sys.random_potential(&mut ChaCha8Rng::seed_from_u64(2), 1.0);
    let mut group = c.benchmark_group("deg_expand_order3");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| expand_degenerate(&gs, &w, 3, &DegOptions::default()).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, nondeg_series, theta_assembly, deg_series);
criterion_main!(benches);
