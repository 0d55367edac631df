use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mmncl_bench::{batch_indices, unit_rows};
use mmncl_core::objective::{loss_mm_infonce, loss_mm_ncl, soft_neighborhood, LossConfig, Temperature};
use std::hint::black_box;

fn losses(c: &mut Criterion) {
    let cfg = LossConfig::default();
    let temp = Temperature::from_value(0.07);
    let mut group = c.benchmark_group("loss");
    for k in [64, 256, 512] {
        let h_s = unit_rows(1, k, 128);
        let h_t = unit_rows(2, k, 128);
        let idx = batch_indices(3, k, 4);
        group.bench_with_input(BenchmarkId::new("neighborhood", k), &k, |b, _| {
            b.iter(|| soft_neighborhood(black_box(&idx), cfg.beta).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("mm_ncl", k), &k, |b, _| {
            b.iter(|| loss_mm_ncl(black_box(h_s.view()), h_t.view(), &idx, &cfg, &temp).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("mm_infonce", k), &k, |b, _| {
            b.iter(|| loss_mm_infonce(black_box(h_s.view()), h_t.view(), &temp).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, losses);
criterion_main!(benches);
