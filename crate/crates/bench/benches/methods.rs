use criterion::{criterion_group, criterion_main, Criterion};
use quadform::select::cdf_with;
use quadform::Method;
use quadform_bench::{central, indefinite};
use std::hint::black_box;

fn cdf_methods(c: &mut Criterion) {
    let pd = central();
    let q = 8.0;
    let mut g = c.benchmark_group("cdf_central");
    for m in [Method::Ruben, Method::Kotz, Method::Laguerre, Method::Imhof, Method::Davies, Method::SpaLr] {
        g.bench_function(m.name(), |b| b.iter(|| cdf_with(black_box(&pd), black_box(q), m, 1e-8)));
    }
    g.finish();

    let ind = indefinite();
    let mut g = c.benchmark_group("cdf_indefinite");
    for m in [Method::Davies, Method::SpaLr, Method::SpaBn] {
        g.bench_function(m.name(), |b| b.iter(|| cdf_with(black_box(&ind), black_box(1.0), m, 1e-8)));
    }
    g.finish();
}

criterion_group!(benches, cdf_methods);
criterion_main!(benches);
