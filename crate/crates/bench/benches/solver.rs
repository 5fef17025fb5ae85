use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mrsvdd::svdd::solve_dual;
use mrsvdd::{HyperParams, SolverOptions};
use mrsvdd_bench::dual_instance;
use std::hint::black_box;

fn solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_dual");
    group.sample_size(10);
    for n in [50, 150, 300] {
        let (q, y) = dual_instance(n);
        for exponent in [4.0 / 3.0, 2.0, 8.0] {
            let hp = HyperParams {
                q: exponent,
                c3: 0.0,
                nu: 2.0,
                ..Default::default()
            };
            group.bench_with_input(
                BenchmarkId::new(format!("q{exponent:.2}"), n),
                &q,
                |b, q| {
                    b.iter(|| solve_dual(black_box(q), &y, &hp, &SolverOptions::default()).unwrap())
                },
            );
        }
    }
    group.finish();
}

criterion_group!(benches, solve);
criterion_main!(benches);
