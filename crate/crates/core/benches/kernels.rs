use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gnetdet_core::detect::{nms_with, BoundingBox};
use gnetdet_core::model::{build_gnetdet_small, execute, WeightStore};
use gnetdet_core::nn::{conv3x3_direct, conv3x3_with, ConvKernel, Padding, Tensor};
use gnetdet_core::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODES: [Exec; 2] = [Exec::Sequential, Exec::Parallel];

fn random_tensor(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Tensor {
    Tensor::new(
        c,
        h,
        w,
        (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn random_kernel(rng: &mut ChaCha8Rng, out: usize, inp: usize) -> ConvKernel {
    let w = (0..out * inp * 9)
        .map(|_| rng.gen_range(-0.1..0.1))
        .collect();
    let b = (0..out).map(|_| rng.gen_range(-0.1..0.1)).collect();
    ConvKernel::new(out, inp, w, b).unwrap()
}

fn conv(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut g = c.benchmark_group("conv3x3 128->128 56x56");
    g.sample_size(10);
    let x = random_tensor(&mut rng, 128, 56, 56);
    let k = random_kernel(&mut rng, 128, 128);
    for exec in MODES {
        g.bench_with_input(BenchmarkId::new("gemm", exec), &exec, |b, &e| {
            b.iter(|| conv3x3_with(&x, &k, Padding::Same, e).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("direct", exec), &exec, |b, &e| {
            b.iter(|| conv3x3_direct(&x, &k, Padding::Same, e).unwrap())
        });
    }
    g.finish();
}

fn forward(c: &mut Criterion) {
    let spec = build_gnetdet_small(224, 1, 20).unwrap();
    let weights = WeightStore::random(&spec, 3);
    let x = random_tensor(&mut ChaCha8Rng::seed_from_u64(2), 1, 224, 224);
    let mut g = c.benchmark_group("gnetdet-small 224 forward");
    g.sample_size(10);
    for exec in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(exec), &exec, |b, &e| {
            b.iter(|| execute(&spec, &weights, &x, e).unwrap())
        });
    }
    g.finish();
}

fn nms(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let boxes: Vec<BoundingBox> = (0..392)
        .map(|_| {
            let (x, y) = (rng.gen_range(0.0..400.0), rng.gen_range(0.0..400.0));
            let (w, h) = (rng.gen_range(10.0..120.0), rng.gen_range(10.0..120.0));
            BoundingBox::new(
                rng.gen_range(0..20),
                rng.gen_range(0.2..1.0),
                x,
                y,
                x + w,
                y + h,
            )
        })
        .collect();
    let mut g = c.benchmark_group("nms 392 boxes 20 classes");
    for exec in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(exec), &exec, |b, &e| {
            b.iter(|| nms_with(&boxes, 0.45, e))
        });
    }
    g.finish();
}

criterion_group!(benches, conv, forward, nms);
criterion_main!(benches);
