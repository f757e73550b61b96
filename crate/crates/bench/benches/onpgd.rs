use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mfonline_bench::nonlinear_pair;
use mfonline_core::onpgd::{init_ensemble, step, OnpgdConfig, ParticleNoise};

fn bench_step(c: &mut Criterion) {
    let (train, _) = nonlinear_pair(1);
    let z = &train.points()[0];
    let mut group = c.benchmark_group("onpgd_step");
    for n in [10usize, 80, 320] {
        let cfg = OnpgdConfig { particles: n, ..Default::default() };
        let mut ensemble = init_ensemble(&cfg, train.covariate_dim(), 7).unwrap();
        let mut noise = ParticleNoise::new(7, n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| step(&mut ensemble, z, &cfg, &mut noise).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_step);
criterion_main!(benches);
