use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use proxline::problems::logistic_oracle;
use proxline::{solve, DirectionKind, SolveParams, SolverKind};
use proxline_benches::{box_qp, logistic};
use std::hint::black_box;

fn bench_box_qp(c: &mut Criterion) {
    let inst = box_qp(50, 7);
    let problem = inst.problem();
    let x0 = vec![0.0; inst.dim()];
    let mut group = c.benchmark_group("box_qp_n50");
    for kind in SolverKind::ALL {
        let params = SolveParams::new(kind, inst.lipschitz).with_max_iter(5000);
        group.bench_with_input(BenchmarkId::from_parameter(kind), &params, |b, params| {
            b.iter(|| {
                let mut dir = DirectionKind::Lbfgs { memory: 20 }.build();
                black_box(solve(&problem, &x0, params, dir.as_mut()).unwrap())
            })
        });
    }
    group.finish();
}

fn bench_logistic(c: &mut Criterion) {
    let p = logistic(500, 100, 0.05, 3);
    let l = p.lipschitz_estimate();
    let x0 = vec![0.0; p.dim()];
    let mut group = c.benchmark_group("logistic_500x100");
    for kind in [SolverKind::PanocPlus, SolverKind::ZeroFpr, SolverKind::Panoc] {
        let params = SolveParams::new(kind, l);
        group.bench_with_input(BenchmarkId::from_parameter(kind), &params, |b, params| {
            b.iter(|| {
                let problem = logistic_oracle(&p);
                let mut dir = DirectionKind::Lbfgs { memory: 5 }.build();
                black_box(solve(&problem, &x0, params, dir.as_mut()).unwrap())
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_box_qp, bench_logistic);
criterion_main!(benches);
