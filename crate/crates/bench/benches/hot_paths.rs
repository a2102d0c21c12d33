use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use l1kde_core::block_checks::{BlockParams, BlockSetup};
use l1kde_core::rng::rng_from_seed;
use l1kde_core::{Density, Kernel, L1Integrator, L1Method};

fn sigma2(c: &mut Criterion) {
    // the variance is memoised per kernel, so build a fresh one each time
    c.bench_function("sigma2_epanechnikov", |b| b.iter(|| black_box(Kernel::epanechnikov()).asymptotic_variance().unwrap()));
}

fn l1_exact(c: &mut Criterion) {
    let f = Density::uniform(0.0, 1.0);
    let k = Kernel::uniform();
    let n = 100_000;
    let h = (n as f64).powf(-0.25);
    let ig = L1Integrator::new(&f, &k, h, vec![(-h, 1.0 + h)], L1Method::Exact).unwrap();
    let xs = f.sample_sorted(n, &mut rng_from_seed(1));
    c.bench_function("l1_exact_uniform_n1e5", |b| b.iter(|| ig.integrate(black_box(&xs), n)));
    let g = Density::standard_gaussian();
    let ig = L1Integrator::auto(&g, &k, h, vec![(-9.0, 9.0)]).unwrap();
    let xs = g.sample_sorted(n, &mut rng_from_seed(2));
    c.bench_function("l1_exact_gaussian_n1e5", |b| b.iter(|| ig.integrate(black_box(&xs), n)));
}

fn partition(c: &mut Criterion) {
    let f = Density::uniform(-0.5, 0.5);
    let k = Kernel::uniform();
    let n = 10_000;
    let h = (n as f64).powf(-1.0 / 3.0);
    let mut g = c.benchmark_group("partition");
    g.sample_size(10);
    g.bench_function("block_setup_uniform_n1e4", |b| b.iter(|| BlockSetup::new(&f, &k, n, h, BlockParams::default()).unwrap()));
    g.finish();
}

criterion_group!(benches, sigma2, l1_exact, partition);
criterion_main!(benches);
