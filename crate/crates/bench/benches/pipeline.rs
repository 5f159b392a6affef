use std::hint::black_box;

use ccid_bench::{clean, noisy, SIDE};
use ccid_core::confidence::ground_truth_confidence;
use ccid_core::denoisers::gaussian_filter;
use ccid_core::image::{evaluate, psnr, ssim};
use criterion::{criterion_group, criterion_main, Criterion};

fn bench_pipeline(c: &mut Criterion) {
    let clean = clean(SIDE);
    let noisy = noisy(SIDE);
    c.bench_function("gaussian_filter_512_sigma4", |b| {
        b.iter(|| gaussian_filter(black_box(&noisy), 4.0).unwrap())
    });
    c.bench_function("psnr_512", |b| b.iter(|| psnr(black_box(&noisy), &clean).unwrap()));
    c.bench_function("ssim_512", |b| b.iter(|| ssim(black_box(&noisy), &clean).unwrap()));
    c.bench_function("evaluate_512", |b| {
        b.iter(|| evaluate(black_box(&noisy), &clean).unwrap())
    });
    c.bench_function("ground_truth_confidence_512", |b| {
        b.iter(|| ground_truth_confidence(black_box(&clean), &noisy).unwrap())
    });
}

criterion_group!(benches, bench_pipeline);
criterion_main!(benches);
