//! Rayon pool against a single worker on the parallel hot paths.
//!
//! Without the `parallel` feature both variants run the sequential code.

use std::f64::consts::PI;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gtspec_core::spectrum::spectral_gap;
use gtspec_core::schroedinger::mu_table;
use gtspec_core::{GapOptions, SigmaProfile};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn profiles() -> Vec<(&'static str, SigmaProfile)> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    vec![
        ("const-1", SigmaProfile::constant(1.0).unwrap()),
        ("step", SigmaProfile::new(vec![0.0, PI, 2.0 * PI], vec![0.5, 3.5]).unwrap()),
        ("random-8", SigmaProfile::random(&mut rng, 8, 6.0)),
    ]
}

fn pools() -> Vec<(String, rayon::ThreadPool)> {
    let seq = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let par = rayon::ThreadPoolBuilder::new().build().unwrap();
    let n = par.current_num_threads();
    vec![("sequential".into(), seq), (format!("rayon-{n}"), par)]
}

fn gap(c: &mut Criterion) {
    let mut group = c.benchmark_group("spectral_gap");
    group.sample_size(10);
    let opts = GapOptions::default();
    for (name, p) in profiles() {
        for (label, pool) in pools() {
            group.bench_with_input(BenchmarkId::new(label, name), &p, |b, p| {
                b.iter(|| pool.install(|| spectral_gap(black_box(p), &opts).unwrap()))
            });
        }
    }
    group.finish();
}

fn hamiltonian(c: &mut Criterion) {
    let mut group = c.benchmark_group("mu_table");
    group.sample_size(10);
    let p = SigmaProfile::new(vec![0.0, PI, 2.0 * PI], vec![0.0, 8.0]).unwrap();
    for (label, pool) in pools() {
        group.bench_function(label, |b| {
            b.iter(|| pool.install(|| mu_table(black_box(&p), -0.3, -0.01, 32, 256).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, gap, hamiltonian);
criterion_main!(benches);
