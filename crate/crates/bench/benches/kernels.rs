use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use dualgap_bench::{cloud, dataset, relu_branch, sets, uniform_matrix};
use dualgap_core::dual_lnn::{solve_dual_projected_ascent, AscentParams};
use dualgap_core::geometry::{convex_hull, sf_decompose, PlanarSet};
use dualgap_core::landscape::{loss_and_grad, teacher_synthetic_data, Architecture, Loss, MultiBranchNet};
use dualgap_core::linear_net::gaussian_identity_instance;
use dualgap_core::matrix::svd;
use dualgap_core::multibranch::{default_k, default_tau, primal_inf, replicate};
use dualgap_core::rng;

fn bench_svd(c: &mut Criterion) {
    let mut g = c.benchmark_group("svd");
    for n in [20, 50, 100] {
        let m = uniform_matrix(n, n, 1);
        g.bench_with_input(BenchmarkId::from_parameter(n), &m, |b, m| b.iter(|| svd(black_box(m)).unwrap()));
    }
    g.finish();
}

fn bench_dual_ascent(c: &mut Criterion) {
    let p = gaussian_identity_instance(20, 5, 2, 0).unwrap();
    let p = p.with_gamma(0.5 * p.sigma_min().unwrap()).unwrap();
    let params = AscentParams::default();
    c.bench_function("dual_ascent/n20", |b| b.iter(|| solve_dual_projected_ascent(black_box(&p), &params).unwrap()));
}

fn bench_hull(c: &mut Criterion) {
    let mut g = c.benchmark_group("convex_hull");
    for n in [1_000, 100_000] {
        let s = PlanarSet::new(cloud(n, 2)).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &s, |b, s| b.iter(|| convex_hull(black_box(s))));
    }
    g.finish();
}

fn bench_sf(c: &mut Criterion) {
    let s = sets(32, 8, 3);
    let y = [0.0, 0.0];
    c.bench_function("sf_decompose/32x8", |b| b.iter(|| sf_decompose(black_box(y), &s).unwrap()));
}

fn bench_primal_dp(c: &mut Criterion) {
    let data = dataset(4);
    let t = [relu_branch()];
    let tau = default_tau(&t, &data).unwrap();
    let k = default_k(&t, 1).unwrap();
    let mut g = c.benchmark_group("primal_dp");
    for count in [4, 16, 32] {
        let branches = replicate(&t, count);
        g.bench_with_input(BenchmarkId::from_parameter(count), &branches, |b, br| {
            b.iter(|| primal_inf(black_box(br), &data, tau, k).unwrap())
        });
    }
    g.finish();
}

fn bench_sgd_step(c: &mut Criterion) {
    let task = teacher_synthetic_data(1000, 10, 11, 0).unwrap();
    let batch: Vec<usize> = (0..32).collect();
    let mut g = c.benchmark_group("sgd_batch_grad");
    for width in [10, 100, 1000] {
        let net = MultiBranchNet::init(Architecture::one_hidden_layer(10, width), &mut rng::seeded(5)).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(width), &net, |b, net| {
            b.iter(|| loss_and_grad(black_box(net), &task.data, Loss::default(), &batch))
        });
    }
    g.finish();
}

criterion_group!(benches, bench_svd, bench_dual_ascent, bench_hull, bench_sf, bench_primal_dp, bench_sgd_step);
criterion_main!(benches);
