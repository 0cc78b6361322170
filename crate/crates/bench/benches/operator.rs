use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nonlocal_ql::levy_measures::{build_quadrature, JumpSampler};
use nonlocal_ql::nonlocal_operator::eval_l_field;
use nonlocal_ql::{GradientSource, JumpFamily, LevyMeasureSpec};
use nonlocal_ql_bench::{bump, operator};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn quadrature(c: &mut Criterion) {
    let mut g = c.benchmark_group("build_quadrature");
    for (dim, res) in [(1, 32), (1, 512), (2, 32), (2, 128)] {
        let spec = LevyMeasureSpec::fractional(dim, 1.5);
        g.bench_with_input(BenchmarkId::new(format!("{dim}d"), res), &res, |b, &res| {
            b.iter(|| build_quadrature(black_box(&spec), 0.05, res).unwrap())
        });
    }
    g.finish();
}

fn operator_field(c: &mut Criterion) {
    let mut g = c.benchmark_group("eval_l_field");
    g.sample_size(20);
    let cases = [
        ("identity_1d", JumpFamily::Identity, 1, 201),
        ("directional_1d", JumpFamily::DirectionalGradient, 1, 201),
        ("identity_2d", JumpFamily::Identity, 2, 61),
        ("p_laplace_2d", JumpFamily::PLaplaceFull, 2, 61),
    ];
    for (name, family, dim, n) in cases {
        let u = bump(dim, n);
        let op = operator(family, dim, 1.5, 32);
        g.bench_function(name, |b| {
            b.iter(|| eval_l_field(black_box(&u), &op, GradientSource::SelfCentralDiff).unwrap())
        });
    }
    g.finish();
}

fn sampling(c: &mut Criterion) {
    let spec = LevyMeasureSpec::fractional(2, 1.5);
    let sampler = JumpSampler::new(&spec, 0.01).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    c.bench_function("jump_sampler_2d", |b| b.iter(|| sampler.sample(&mut rng)));
}

criterion_group!(benches, quadrature, operator_field, sampling);
criterion_main!(benches);
