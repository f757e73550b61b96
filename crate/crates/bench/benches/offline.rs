use criterion::{criterion_group, criterion_main, Criterion};
use mfonline_bench::nonlinear_pair;
use mfonline_core::offline::{batch_gradient, init_offline, OfflineFitConfig};

fn bench_gradient(c: &mut Criterion) {
    let (train, _) = nonlinear_pair(2);
    let cfg = OfflineFitConfig::default();
    let ensemble = init_offline(&cfg, train.covariate_dim()).unwrap();
    c.bench_function("offline_batch_gradient", |b| b.iter(|| batch_gradient(&ensemble, &train, cfg.lambda).unwrap()));
}

criterion_group!(benches, bench_gradient);
criterion_main!(benches);
