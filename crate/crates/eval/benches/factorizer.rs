use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use holofactor::oracle::brute_force;
use holofactor::NoiseBackend;
use holofactor_eval::{codebooks, factorizer, query, rng};

fn step(c: &mut Criterion) {
    let set = codebooks(256, 256, 3);
    let p = query(&set);
    let mut g = c.benchmark_group("step_d256_m256_f3");
    for (name, backend) in [("exact", NoiseBackend::Exact), ("pcm", NoiseBackend::pcm_default())] {
        let fz = factorizer(&set, backend, 100);
        let mut r = rng(7);
        let mut state = fz.init_state(&mut r);
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| fz.step(&mut state, black_box(&p), &mut r)));
    }
    g.finish();
}

fn factorize_small(c: &mut Criterion) {
    let set = codebooks(256, 16, 3);
    let p = query(&set);
    let fz = factorizer(&set, NoiseBackend::pcm_default(), 85);
    let mut seed = 0u64;
    c.bench_function("factorize_d256_m16_f3", |b| {
        b.iter(|| {
            seed += 1;
            fz.factorize(black_box(&p), &mut rng(seed)).unwrap()
        })
    });
    c.bench_function("brute_force_d256_m16_f3", |b| b.iter(|| brute_force(black_box(&p), &set).unwrap()));
}

criterion_group!(benches, step, factorize_small);
criterion_main!(benches);
