use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mmncl_bench::{unit_rows, windows};
use mmncl_core::encoders::{ContrastiveModel, EncoderConfig};
use mmncl_core::rng::rng_for;
use std::hint::black_box;

fn towers(c: &mut Criterion) {
    let cfg = EncoderConfig::default();
    let model = ContrastiveModel::init(&cfg, &mut rng_for(0, &[])).unwrap();
    let mut group = c.benchmark_group("towers");
    group.sample_size(20);
    for k in [64, 256] {
        let x = windows(1, k, 16, cfg.input_dim);
        let provider = unit_rows(2, k, cfg.provider_dim);
        group.bench_with_input(BenchmarkId::new("forward", k), &k, |b, _| {
            b.iter(|| model.forward_pairs(black_box(x.view()), provider.view(), None).unwrap())
        });
        let fwd = model.forward_pairs(x.view(), provider.view(), None).unwrap();
        let d_s = unit_rows(3, k, cfg.shared_dim);
        let d_t = unit_rows(4, k, cfg.shared_dim);
        group.bench_with_input(BenchmarkId::new("backward", k), &k, |b, _| {
            let mut grad = model.zeros_like();
            b.iter(|| model.backward_pairs(black_box(&fwd), d_s.view(), d_t.view(), &mut grad))
        });
    }
    group.finish();
}

criterion_group!(benches, towers);
criterion_main!(benches);
