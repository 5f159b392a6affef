use std::hint::black_box;

use ccid_bench::{branches, SIDE};
use ccid_core::fusion::Fuser;
use ccid_core::{FusionMode, FusionParams};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn bench_slider(c: &mut Criterion) {
    let (deep, reliable, conf) = branches(SIDE);
    let fuser = Fuser::new(deep.clone(), reliable.clone()).unwrap();
    let mut group = c.benchmark_group("fuse_warm_512");
    for mode in FusionMode::ALL {
        let params = FusionParams::default().with_mode(mode);
        fuser.fuse(Some(&conf), &params).unwrap();
        group.bench_function(BenchmarkId::from_parameter(mode), |b| {
            let mut w = 0.0;
            b.iter(|| {
                w = (w + 0.037) % 1.0;
                fuser
                    .fuse(Some(&conf), black_box(&params.with_w(0.01 + 0.98 * w)))
                    .unwrap()
            })
        });
    }
    group.finish();

    let mut group = c.benchmark_group("fuse_cold_512");
    group.sample_size(20);
    for mode in FusionMode::ALL {
        let params = FusionParams::default().with_mode(mode);
        group.bench_function(BenchmarkId::from_parameter(mode), |b| {
            b.iter(|| {
                Fuser::new(deep.clone(), reliable.clone())
                    .unwrap()
                    .fuse(Some(&conf), black_box(&params))
                    .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_slider);
criterion_main!(benches);
