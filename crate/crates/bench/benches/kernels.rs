use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use cms_bench::{cyclic_window, system};
use cms_core::dynamics::ChainState;
use cms_core::thermo::cylinder_measure;
use cms_core::{coding_map, estimate_invariant_measure, parse, CodingOptions, CylinderMode, StreamKey};

fn expression_eval(c: &mut Criterion) {
    let e = parse("0.1 + 0.8*sin(3.14159*x1)^2 + exp(-x1) / (1 + x2^2)").unwrap();
    let p = [0.37, 1.25];
    c.bench_function("expr/eval", |b| b.iter(|| e.eval(black_box(&p)).unwrap()));
}

fn chain_step(c: &mut Criterion) {
    let sys = system("decimal-weighted");
    let mut rng = StreamKey::new(1).derive("bench").stream(0);
    let mut state = ChainState::at_anchor(&sys, 0);
    c.bench_function("chain/step", |b| b.iter(|| state.step(&sys, &mut rng).unwrap()));
}

fn coding(c: &mut Criterion) {
    let sys = system("example3");
    let window = cyclic_window(&sys, 32);
    let opts = CodingOptions::new(1e-10, 32);
    c.bench_function("coding/depth32", |b| b.iter(|| coding_map(&sys, black_box(&window), &opts).unwrap()));
}

fn cylinder(c: &mut Criterion) {
    let sys = system("decimal-weighted");
    let mu = estimate_invariant_measure(&sys, 10_000, None, 0).unwrap().ensemble;
    let word = [3usize, 1, 4];
    c.bench_function("cylinder/len3_10k", |b| {
        b.iter(|| cylinder_measure(&sys, &mu, black_box(&word), CylinderMode::Quadrature).unwrap())
    });
}

criterion_group!(benches, expression_eval, chain_step, coding, cylinder);
criterion_main!(benches);
