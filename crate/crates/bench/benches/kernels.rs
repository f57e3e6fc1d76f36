//! Criterion benchmarks for the numeric kernels: expression evaluation and
//! differentiation, metric assembly, Christoffel evaluation, chain
//! integration and the exact model arithmetic.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use lcgeo_core::curves::{ChainContext, IntegratorConfig};
use lcgeo_core::expr::{Expr, VarSet};
use lcgeo_core::fefferman::build_fefferman;
use lcgeo_core::lc::{LcStructure, PointM};
use lcgeo_core::model::{model_chain, rat, ModelTangent, PcLine};

fn bench_expr(c: &mut Criterion) {
    let vars = VarSet::adapted(1);
    let e = Expr::parse("0.5*(p1 + exp(-2*x1)*p1^3) / (1 + sin(x1)^2)", &vars).unwrap();
    c.bench_function("expr_eval", |b| {
        b.iter(|| e.eval(&vars, black_box(&[0.3, -0.1, 0.7])).unwrap())
    });
    c.bench_function("expr_diff_simplify", |b| {
        b.iter(|| black_box(&e).diff(2))
    });
}

fn bench_fefferman(c: &mut Criterion) {
    let s = LcStructure::example();
    c.bench_function("build_fefferman_n1", |b| b.iter(|| build_fefferman(black_box(&s))));
    let g = build_fefferman(&s);
    let q = vec![0.1, -0.2, 0.8, 0.0];
    c.bench_function("metric_eval", |b| b.iter(|| g.eval(black_box(&q)).unwrap()));
    let ctx = ChainContext::new(s);
    c.bench_function("christoffels_at_point", |b| {
        b.iter(|| ctx.field().christoffels(black_box(&q)).unwrap())
    });
}

fn bench_chain(c: &mut Criterion) {
    let ctx = ChainContext::new(LcStructure::example());
    let q = PointM::new(vec![0.1], 0.0, vec![0.8]);
    let v = vec![1.0, 0.0, 0.3];
    let cfg = IntegratorConfig::default();
    c.bench_function("chain_integration", |b| {
        b.iter(|| {
            ctx.chain(black_box(&q), black_box(&v), 0.0, (0.0, 0.3), &cfg)
                .unwrap()
        })
    });
}

fn bench_model(c: &mut Criterion) {
    let o = PcLine::origin(3);
    let x = [rat(2), rat(-1), rat(3)];
    let y = [rat(1), rat(4), rat(0)];
    let w = ModelTangent::from_blocks(o.clone(), &x, &y, rat(5)).unwrap();
    c.bench_function("model_chain_exact", |b| {
        b.iter(|| {
            let curve = model_chain(black_box(&o), black_box(&w)).unwrap();
            curve.at(&rat(7))
        })
    });
}

criterion_group!(benches, bench_expr, bench_fefferman, bench_chain, bench_model);
criterion_main!(benches);
